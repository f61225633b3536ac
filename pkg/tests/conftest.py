import pytest

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Call with (number, passed, detail) to record an acceptance verdict."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str) -> None:
        results[number] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
