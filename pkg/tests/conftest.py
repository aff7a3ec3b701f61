from __future__ import annotations

import pytest

_LINES = pytest.StashKey[list]()
_DETAILS = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_LINES] = []


@pytest.fixture
def detail(request):
    """List the test appends human-readable measurements to; shown in the criterion line."""
    out = []
    request.node.stash[_DETAILS] = out
    return out


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    info = "; ".join(item.stash.get(_DETAILS, []))
    if rep.failed and call.excinfo is not None:
        info = (info + "; " if info else "") + f"{call.excinfo.typename}: {call.excinfo.value}".splitlines()[0]
    line = (f"criterion {number:>2} [{'PASS' if rep.passed else 'FAIL'}] {title}"
            f" ({rep.duration:.1f} s){': ' + info if info else ''}")
    item.config.stash[_LINES].append((number, line))
    print("\n" + line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda p: p[0]):
        terminalreporter.write_line(line)
