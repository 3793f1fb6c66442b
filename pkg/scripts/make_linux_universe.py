"""Regenerate src/tracesynth/data/linux_like.json.

Names are the x86_64 syscalls up to Linux 5.5 (numbers 0-334 and 424-434),
minus 15 unimplemented or long-removed entries, which leaves 331 calls.
Dependency pairs are hand-picked families (fd producers feeding fd consumers,
calls sharing inode / memory / process state) and are illustrative only.

    python scripts/make_linux_universe.py [path/to/unistd_64.h]
"""

import re
import sys
from itertools import combinations
from pathlib import Path

from tracesynth.universe import DependencyGraph, SyscallSpec, SyscallUniverse, save_universe

HEADER = "/usr/include/x86_64-linux-gnu/asm/unistd_64.h"
DEFUNCT = {
    "afs_syscall", "tuxcall", "security", "vserver", "getpmsg", "putpmsg",
    "create_module", "get_kernel_syms", "query_module", "nfsservctl", "uselib",
    "_sysctl", "epoll_ctl_old", "epoll_wait_old", "lookup_dcookie",
}

FD_PRODUCERS = [
    "open", "openat", "creat", "dup", "dup2", "dup3", "socket", "accept", "accept4",
    "pipe", "pipe2", "eventfd", "eventfd2", "epoll_create", "epoll_create1",
    "timerfd_create", "signalfd", "signalfd4", "inotify_init", "inotify_init1",
    "memfd_create", "fanotify_init", "userfaultfd", "perf_event_open", "open_tree",
    "fsopen", "pidfd_open", "io_uring_setup",
]
FILE_CONSUMERS = [
    "read", "write", "pread64", "pwrite64", "readv", "writev", "preadv", "pwritev",
    "preadv2", "pwritev2", "close", "lseek", "fstat", "fsync", "fdatasync",
    "ftruncate", "fchmod", "fchown", "fcntl", "ioctl", "flock", "fstatfs",
    "getdents64", "fgetxattr", "fsetxattr", "flistxattr", "fremovexattr",
    "fadvise64", "fallocate", "sendfile", "mmap", "splice", "tee", "sync_file_range",
    "readahead", "fchdir", "syncfs", "copy_file_range", "poll", "select",
]
SOCKET_CONSUMERS = [
    "bind", "listen", "connect", "sendto", "recvfrom", "sendmsg", "recvmsg",
    "sendmmsg", "recvmmsg", "shutdown", "getsockname", "getpeername",
    "setsockopt", "getsockopt",
]
OTHER_EXPLICIT = [
    ("socket", "accept"), ("socket", "accept4"), ("epoll_create1", "epoll_ctl"),
    ("epoll_create1", "epoll_wait"), ("epoll_create1", "epoll_pwait"),
    ("timerfd_create", "timerfd_settime"), ("timerfd_create", "timerfd_gettime"),
    ("inotify_init1", "inotify_add_watch"), ("inotify_init1", "inotify_rm_watch"),
    ("mmap", "munmap"), ("mmap", "mprotect"), ("mmap", "mremap"), ("mmap", "msync"),
    ("mmap", "madvise"), ("mmap", "mlock"), ("mmap", "munlock"), ("mmap", "mincore"),
    ("shmget", "shmat"), ("shmat", "shmdt"), ("shmget", "shmctl"),
    ("semget", "semop"), ("semget", "semctl"), ("semget", "semtimedop"),
    ("msgget", "msgsnd"), ("msgget", "msgrcv"), ("msgget", "msgctl"),
    ("mq_open", "mq_timedsend"), ("mq_open", "mq_timedreceive"), ("mq_open", "mq_notify"),
    ("mq_open", "mq_getsetattr"), ("timer_create", "timer_settime"),
    ("timer_create", "timer_gettime"), ("timer_create", "timer_delete"),
    ("timer_create", "timer_getoverrun"), ("io_setup", "io_submit"),
    ("io_setup", "io_getevents"), ("io_setup", "io_cancel"), ("io_setup", "io_destroy"),
    ("io_uring_setup", "io_uring_enter"), ("io_uring_setup", "io_uring_register"),
    ("add_key", "keyctl"), ("request_key", "keyctl"), ("fork", "wait4"),
    ("clone", "wait4"), ("fork", "kill"), ("clone", "waitid"), ("getpid", "kill"),
    ("gettid", "tgkill"), ("fsopen", "fsconfig"), ("fsconfig", "fsmount"),
    ("fsmount", "move_mount"), ("open_tree", "move_mount"), ("pidfd_open", "pidfd_send_signal"),
    ("memfd_create", "fcntl"), ("clock_gettime", "clock_nanosleep"),
]
IMPLICIT_GROUPS = [
    # inode metadata
    ["openat", "pwritev", "chmod", "fchmod", "fchown", "chown", "lchown", "getxattr",
     "setxattr", "lsetxattr", "truncate", "utimensat", "stat", "lstat", "rename"],
    # address space
    ["mmap", "munmap", "mprotect", "brk", "mremap", "madvise", "mlock", "mlockall"],
    # credentials and process groups
    ["setuid", "setgid", "setresuid", "getresuid", "setgroups", "capset", "setpgid",
     "getpgrp", "setsid", "pipe2", "fchown"],
    # signals
    ["rt_sigaction", "rt_sigprocmask", "kill", "tgkill", "rt_sigpending", "sigaltstack"],
    # namespaces and mounts
    ["unshare", "setns", "mount", "umount2", "pivot_root", "chroot"],
]


def syscall_names(header: str) -> list[str]:
    table = []
    for line in Path(header).read_text().splitlines():
        m = re.match(r"#define __NR_(\w+)\s+(\d+)", line)
        if m:
            nr = int(m.group(2))
            if nr <= 334 or 424 <= nr <= 434:
                table.append((nr, m.group(1)))
    return [name for _, name in sorted(table) if name not in DEFUNCT]


def main(argv):
    names = syscall_names(argv[1] if len(argv) > 1 else HEADER)
    assert len(names) == 331, len(names)
    idx = {nm: i for i, nm in enumerate(names)}
    explicit = set()
    for p in FD_PRODUCERS:
        for c in FILE_CONSUMERS:
            if p != c:
                explicit.add((idx[p], idx[c]))
    for p in ("socket", "accept", "accept4"):
        for c in SOCKET_CONSUMERS:
            explicit.add((idx[p], idx[c]))
    for p, c in OTHER_EXPLICIT:
        explicit.add((idx[p], idx[c]))
    implicit = set()
    for group in IMPLICIT_GROUPS:
        for a, b in combinations(group, 2):
            if a != b:
                implicit.add((min(idx[a], idx[b]), max(idx[a], idx[b])))
    universe = SyscallUniverse(
        [SyscallSpec(nm) for nm in names],
        DependencyGraph(frozenset(explicit), frozenset(implicit)),
        "linux-like",
    )
    out = Path(__file__).resolve().parents[1] / "src" / "tracesynth" / "data" / "linux_like.json"
    save_universe(universe, out)
    print(f"{out}: {universe.n} calls, {len(explicit)} explicit, {len(implicit)} implicit")


if __name__ == "__main__":
    main(sys.argv)
