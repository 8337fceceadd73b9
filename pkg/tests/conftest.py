import numpy as np
import pytest

from hopflink.fieldlab import GridSpec

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid64():
    return GridSpec.cube(8.0, 64)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES, key=int):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
