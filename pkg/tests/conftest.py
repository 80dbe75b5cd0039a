from pathlib import Path

import pytest

from progblock.records import load_dataset, load_ground_truth

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def cars8():
    rs = load_dataset(FIXTURES / "cars8.csv")
    gt = load_ground_truth(FIXTURES / "cars8_truth.csv", rs.n)
    return rs, gt

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
