import pytest

ACCEPTANCE_IDS = tuple(range(1, 13))
_results: dict = {}


@pytest.fixture
def record():
    """Store ``(passed, detail)`` for one acceptance criterion; shown in the terminal summary."""

    def _record(criterion: int, passed: bool, detail: str) -> None:
        prev = _results.get(criterion)
        if prev is not None:
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}"
        _results[criterion] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in ACCEPTANCE_IDS:
        passed, detail = _results.get(k, (False, "not run"))
        terminalreporter.write_line(f"ACCEPTANCE {k:2d} {'PASS' if passed else 'FAIL'}  {detail}")
