"""Shared test plumbing: the acceptance criteria report."""

_CRITERION_LINES = {}


def record_criterion(number, passed, detail):
    """Register one acceptance criterion outcome for the summary table."""
    status = "PASS" if passed else "FAIL"
    _CRITERION_LINES[number] = f"[criterion {number:02d}] {status}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
