"""Shared pytest wiring: replays acceptance one-liners after the run.

Output capture swallows anything tests print, so the acceptance tests
record their pass/fail lines here and a terminal-summary hook writes
them once capture is released, keeping every measured value in the log.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
