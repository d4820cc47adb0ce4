"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    def report(number, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {name}"
        if detail:
            line += f" | {detail}"
        _LINES.append(line)
        print(line, flush=True)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
