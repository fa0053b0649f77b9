"""Shared test plumbing: the acceptance-criteria result board.

Acceptance tests record one (number, passed, description) entry each before
their asserts run, so the end-of-run summary always carries one line per
criterion even when a criterion fails.
"""

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def criteria():
    def record(number: int, passed: bool, description: str) -> None:
        _RESULTS[number] = (bool(passed), description)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, description = _RESULTS[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"CRITERION {number}: {verdict} - {description}")
