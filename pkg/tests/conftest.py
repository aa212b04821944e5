"""Shared test plumbing: the acceptance criteria print one verdict line
each; stdout is captured by pytest, so the lines are replayed in the
terminal summary where they stay visible in batch logs."""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
