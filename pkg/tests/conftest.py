import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        _CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
