"""Shared pytest hooks.

Tests tagged ``@pytest.mark.acceptance(label)`` verify one acceptance
criterion each; after the run the terminal summary prints one PASS /
FAIL / SKIP line per criterion, in declaration order.
"""

import pytest

_SEVERITY = {"pass": 0, "skip": 1, "fail": 2}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(label): test verifies the named acceptance criterion")
    config._acceptance_results = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and (report.when == "call" or not report.passed):
        label = marker.args[0]
        if report.skipped:
            status = "skip"
        elif report.passed:
            status = "pass"
        else:
            status = "fail"
        store = item.config._acceptance_results
        current = store.get(label)
        if current is None or _SEVERITY[status] > _SEVERITY[current]:
            store[label] = status
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in results.items():
        terminalreporter.write_line(f"{status.upper():>4}  {label}")
