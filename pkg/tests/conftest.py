import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call with ``(name, ok, detail)`` and then assert ``ok``."""

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
