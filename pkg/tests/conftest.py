"""Shared pytest wiring for the suite.

The acceptance tests record one "ACCEPTANCE C<k> PASS/FAIL" line each; the
terminal-summary hook below re-emits them at the end of the run so the
per-criterion verdicts are visible even for passing tests, whose captured
stdout pytest normally swallows.
"""

from __future__ import annotations

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus: int, config) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
