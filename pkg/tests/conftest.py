import pytest

from tracesynth.universe import DependencyGraph, SyscallSpec, SyscallUniverse

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid): acceptance criterion id")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _acceptance[cid] = (status, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_acceptance):
        status, name = _acceptance[cid]
        terminalreporter.write_line(f"{cid:<8} {status}  {name}")


@pytest.fixture
def ocr():
    """open/read/close with open feeding both consumers."""
    return SyscallUniverse(
        [SyscallSpec("open"), SyscallSpec("read"), SyscallSpec("close")],
        DependencyGraph(frozenset({(0, 1), (0, 2)}), frozenset()),
        "ocr",
    )
