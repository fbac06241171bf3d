import pytest

_REPORT = {}


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion: report(number, passed, detail)."""
    def record(number, passed, detail):
        _REPORT[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_REPORT):
        passed, detail = _REPORT[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
