"""Shared pytest plumbing for the acceptance suite.

Acceptance tests record one PASS/FAIL line each; the lines are replayed in
a terminal section at the end of the run so they are visible regardless of
capture settings.
"""

VERDICT_LINES: list[str] = []


def record_verdict(line: str) -> None:
    VERDICT_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICT_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
