import pytest

_RESULTS: dict[int, str] = {}


@pytest.fixture
def record():
    """Register one acceptance verdict; printed in the terminal summary."""
    def _record(num: int, name: str, ok: bool, detail: str = "") -> bool:
        _RESULTS[num] = f"{'PASS' if ok else 'FAIL'} [{num:02d}] {name}" + (f": {detail}" if detail else "")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[num])
