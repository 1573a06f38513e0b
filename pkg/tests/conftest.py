"""Shared pytest plumbing: surface acceptance verdicts in the summary.

The acceptance tests print one "[PASS]/[FAIL] criterion N: ..." line
each, but pytest captures stdout of passing tests, so only failures
would be visible in a plain run. Tests register their verdict lines
here and a terminal-summary hook prints the full scoreboard.
"""

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
