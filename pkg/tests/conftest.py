import sys
from pathlib import Path

# the oracle and support modules live next to the tests
sys.path.insert(0, str(Path(__file__).resolve().parent))

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
