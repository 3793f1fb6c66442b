"""Syscall traces, their multi-hot encoding, set-inclusion equivalence, and the
on-disk corpus format.

A trace is a plain tuple of syscall ids. Corpora are written as text, one trace
per line of comma-separated syscall names, under a short ``#`` header::

    # universe: linux-like@3f2a9c0d11aa
    # L: 5
    # created: 2020-01-12T00:00:00+00:00
    lseek,openat,getxattr,chmod,pwritev

Per-trace coverage and creation parameters go to a sibling ``<path>.meta.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .universe import SyscallUniverse

Trace = tuple[int, ...]

DEFAULT_TRACE_LEN = 5
CORPUS_VERSION = 1


class TraceError(ValueError):
    pass


class CorpusFormatError(ValueError):
    pass


def make_trace(calls: Sequence[int], n: int | None = None) -> Trace:
    t = tuple(int(c) for c in calls)
    if n is not None:
        _check_ids(t, n)
    return t


def _check_ids(trace: Sequence[int], n: int) -> None:
    for c in trace:
        if not 0 <= c < n:
            raise TraceError(f"syscall id {c} outside [0, {n})")


def encode(trace: Sequence[int], n: int) -> np.ndarray:
    """Multi-hot state: entry ``i`` is the multiplicity of syscall ``i``."""
    _check_ids(trace, n)
    return np.bincount(np.asarray(trace, dtype=np.int64), minlength=n).astype(np.int64)


def replace(trace: Trace, position: int, new_call: int, n: int | None = None) -> Trace:
    if not 0 <= position < len(trace):
        raise TraceError(f"position {position} outside trace of length {len(trace)}")
    if new_call < 0 or (n is not None and new_call >= n):
        raise TraceError(f"syscall id {new_call} invalid")
    return trace[:position] + (int(new_call),) + trace[position + 1 :]


def equivalent(a: Sequence[int], b: Sequence[int]) -> bool:
    """Partial-order equivalence: one trace's call set contains the other's.

    Not transitive: (a,) ~ (a, b) and (b,) ~ (a, b), yet (a,) !~ (b,).
    """
    sa, sb = set(a), set(b)
    return sa <= sb or sb <= sa


def random_trace(length: int, n: int, rng: np.random.Generator) -> Trace:
    if length < 1 or n < 1:
        raise TraceError("random_trace needs length >= 1 and n >= 1")
    return tuple(int(x) for x in rng.integers(0, n, size=length))


@dataclass(frozen=True)
class Corpus:
    traces: tuple[Trace, ...]
    universe_id: str
    trace_len: int = DEFAULT_TRACE_LEN
    created: str = ""
    params: dict = field(default_factory=dict, compare=True, hash=False)
    coverage: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(tuple(t) for t in self.traces))
        if self.coverage is not None:
            object.__setattr__(self, "coverage", tuple(int(c) for c in self.coverage))
            if len(self.coverage) != len(self.traces):
                raise CorpusFormatError("coverage list does not match trace count")
        for t in self.traces:
            if len(t) != self.trace_len:
                raise CorpusFormatError(
                    f"trace {t} has length {len(t)}, corpus L is {self.trace_len}"
                )

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def num_calls(self) -> int:
        return sum(len(t) for t in self.traces)


def pack_corpus(
    traces: Sequence[Sequence[int]],
    universe: SyscallUniverse,
    trace_len: int = DEFAULT_TRACE_LEN,
    created: str = "",
    params: dict | None = None,
    coverage: Sequence[int] | None = None,
) -> Corpus:
    packed = tuple(make_trace(t, universe.n) for t in traces)
    return Corpus(
        packed,
        universe.universe_id,
        trace_len,
        created,
        dict(params or {}),
        None if coverage is None else tuple(coverage),
    )


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_corpus(corpus: Corpus, path, universe: SyscallUniverse) -> None:
    if corpus.universe_id != universe.universe_id:
        raise CorpusFormatError(
            f"corpus built for {corpus.universe_id}, not {universe.universe_id}"
        )
    names = universe.names
    lines = [
        f"# universe: {corpus.universe_id}",
        f"# L: {corpus.trace_len}",
        f"# created: {corpus.created}",
    ]
    lines += [",".join(names[c] for c in t) for t in corpus.traces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    meta = {
        "version": CORPUS_VERSION,
        "universe": corpus.universe_id,
        "params": corpus.params,
        "coverage": None if corpus.coverage is None else list(corpus.coverage),
    }
    meta_path(path).write_text(
        json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_corpus(path, universe: SyscallUniverse) -> Corpus:
    path = Path(path)
    header: dict[str, str] = {}
    traces = []
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                if traces:
                    raise CorpusFormatError(f"{path}:{lineno}: header after traces")
                key, sep, value = line[1:].partition(":")
                if not sep:
                    raise CorpusFormatError(f"{path}:{lineno}: malformed header")
                header[key.strip()] = value.strip()
                continue
            if not line:
                continue
            try:
                traces.append(tuple(universe.index(name) for name in line.split(",")))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
    for key in ("universe", "L", "created"):
        if key not in header:
            raise CorpusFormatError(f"{path}: missing '# {key}:' header")
    if header["universe"] != universe.universe_id:
        raise CorpusFormatError(
            f"{path}: corpus built for {header['universe']}, not {universe.universe_id}"
        )
    params, coverage = {}, None
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text(encoding="utf-8"))
        if meta.get("version") != CORPUS_VERSION:
            raise CorpusFormatError(f"{mp}: unsupported version {meta.get('version')!r}")
        params = meta.get("params") or {}
        coverage = meta.get("coverage")
    return Corpus(
        tuple(traces),
        header["universe"],
        int(header["L"]),
        header["created"],
        params,
        None if coverage is None else tuple(coverage),
    )


def sample_corpus(corpus: Corpus, k: int, seed: int) -> Corpus:
    """Seeded subsample of ``min(k, len(corpus))`` traces, original order kept."""
    k = min(k, len(corpus))
    rng = np.random.default_rng(seed)
    keep = sorted(rng.choice(len(corpus), size=k, replace=False).tolist()) if k else []
    return Corpus(
        tuple(corpus.traces[i] for i in keep),
        corpus.universe_id,
        corpus.trace_len,
        corpus.created,
        {**corpus.params, "sampled_from": len(corpus), "sample_seed": seed},
        None if corpus.coverage is None else tuple(corpus.coverage[i] for i in keep),
    )
