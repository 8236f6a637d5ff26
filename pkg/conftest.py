"""Acceptance-criteria terminal summary, shared by every test suite in the tree.

Tests marked ``@pytest.mark.criterion("<name>")`` are aggregated by name and
reported as one ``[PASS]``/``[FAIL]`` line each at the end of the run, so the
acceptance gate reads as a checklist regardless of how many tests back a
criterion.
"""

from __future__ import annotations

import pytest

_CRITERIA: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion this test verifies"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        _CRITERIA.setdefault(mark.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _CRITERIA.items():
        verdict = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
