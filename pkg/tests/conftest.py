"""Collects one PASS/FAIL line per acceptance criterion and prints them after the run."""
import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """Call ``criterion(n, ok, detail)`` to record the outcome of acceptance criterion ``n``."""
    def record(n, ok, detail=""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
