import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def add(criterion: str, ok: bool, detail: str, status: str | None = None):
        line = f"[{status or ('PASS' if ok else 'FAIL')}] {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
