import pytest

ACCEPTANCE_CRITERIA = range(1, 10)
_results = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        _results[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in ACCEPTANCE_CRITERIA:
        if n in _results:
            ok, detail = _results[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
