"""Shared test plumbing.

The acceptance tests register one human-readable line per criterion; the
terminal-summary hook prints them after the run so they survive output
capture and land in piped logs.
"""

CRITERION_LINES: list[str] = []


def record_criterion(number: int, passed: bool, message: str) -> str:
    line = f"criterion {number:02d}: {'PASS' if passed else 'FAIL'} - {message}"
    CRITERION_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
