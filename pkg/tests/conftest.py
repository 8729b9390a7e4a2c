import time

import pytest

_RESULTS: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    # a failure in setup or call marks the criterion failed; the call phase decides a pass
    if report.failed:
        _RESULTS[n] = ("FAIL", title, report.duration)
    elif report.when == "call" and n not in _RESULTS:
        _RESULTS[n] = ("PASS", title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, title, _ = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")


class Stopwatch:
    def __init__(self):
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start


@pytest.fixture
def stopwatch():
    return Stopwatch()
