"""Collects outcomes of tests tagged ``@pytest.mark.criterion(name)`` and prints
one PASS/FAIL line per criterion at the end of the run."""
from collections import OrderedDict

import pytest

_outcomes: "OrderedDict[str, list[str]]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _outcomes.setdefault(mark.args[0], [])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[mark.args[0]].append("skipped" if report.skipped else report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _outcomes.items():
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        elif any(r == "failed" for r in results):
            status = "FAIL"
        else:
            status = "INCOMPLETE"
        terminalreporter.write_line(f"{status:8} {name}  ({results.count('passed')}/{len(results)} tests)")
