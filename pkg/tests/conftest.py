import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    mark = getattr(report, "_criterion", None)
    if mark is None:
        return
    number, title = mark
    failed = report.failed
    if report.when == "call" or failed:
        prev = _criteria.get(number)
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        outcome = "FAIL" if failed else ("SKIP" if report.skipped else "PASS")
        if prev is None or outcome == "FAIL":
            _criteria[number] = (outcome, title, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep._criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcome, title, detail = _criteria[number]
        line = f"criterion {number:>2}: {outcome}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
