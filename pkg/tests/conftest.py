"""Shared test fixtures.

The ``acceptance`` fixture lets tests register labeled verdicts that are
replayed as one PASS/FAIL line each in the terminal summary, so the
acceptance checklist can be read off a full ``pytest`` run directly.
"""

from __future__ import annotations

import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(label, passed, detail)`` rows for the end-of-run summary."""
    records = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(label: str, passed: bool, detail: str = "") -> None:
        records.append((str(label), bool(passed), str(detail)))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    records = config.stash.get(ACCEPTANCE_KEY, [])
    if not records:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in records:
        verdict = "PASS" if passed else "FAIL"
        line = f"[{verdict}] {label}"
        if detail:
            line = f"{line}  ({detail})"
        terminalreporter.write_line(line)
