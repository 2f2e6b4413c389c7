import pytest

ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""
    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[name] = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE.values():
            terminalreporter.write_line(line)
