"""Shared pytest plumbing: acceptance-criterion bookkeeping.

Tests marked @pytest.mark.criterion(n, label) feed a summary block that
prints exactly one PASS/FAIL line per criterion at the end of the run,
so the acceptance status is readable without scrolling the full log.
"""

import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, label): marks a test as part of an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, label = marker.args
    entry = _RESULTS.setdefault(num, {"label": label, "ran": False,
                                      "failed": False})
    if report.failed:
        entry["failed"] = True
        entry["ran"] = True
    elif report.when == "call" and report.passed:
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        entry = _RESULTS[num]
        if entry["failed"]:
            status = "FAIL"
        elif entry["ran"]:
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(
            f"criterion {num}: {status} - {entry['label']}")
