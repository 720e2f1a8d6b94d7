"""Collects the one-line verdicts printed by the acceptance suite."""

import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Call ``verdict(n, ok, detail)`` once per acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
