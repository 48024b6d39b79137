import pytest

_VERDICTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL/SKIP line per acceptance criterion, printed after the run."""

    def record(number: int, ok: bool | None, detail: str):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        _VERDICTS[number] = (status, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        status, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
