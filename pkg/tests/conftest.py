import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Store a PASS/FAIL line for the acceptance summary."""

    def record(number, name, passed, detail=""):
        ACCEPTANCE[number] = (name, bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        line = f"{'PASS' if passed else 'FAIL'}  {number:>2}. {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
