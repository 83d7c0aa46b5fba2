"""Shared pytest plumbing for the test suite.

Acceptance tests report one human-readable pass line each.  Pytest
captures test stdout by default, so those lines are also collected here
and re-emitted in the terminal summary, where they are always visible.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
