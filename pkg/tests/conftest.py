import os

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion number and title")
    # threads would only add noise to timings on the single-core runner
    os.environ.setdefault("DPOPT_THREADS", "1")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        state = "XFAIL" if hasattr(rep, "wasxfail") and rep.skipped else \
            ("PASS" if rep.outcome == "passed" else "FAIL")
        prev = _RESULTS.get(num, (title, "PASS", 0.0))
        worst = max(prev[1], state, key=("PASS", "XFAIL", "FAIL").index)
        _RESULTS[num] = (title, worst, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, state, secs = _RESULTS[num]
        note = "  (known unattainable case, see the xfail reason)" if state == "XFAIL" else ""
        terminalreporter.write_line(f"[{state}] #{num:<2} {title} ({secs:.2f} s){note}")
