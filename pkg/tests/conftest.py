"""Collects the acceptance verdict lines and prints them after the test run."""

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)
