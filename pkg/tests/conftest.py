import numpy as np
import pytest

from qpar import SearchWindow, assemble, find_eigs
from qpar.testbeds import build

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cube():
    """Lowest mode of the 16^3 impedance box: (op, pair)."""
    op = assemble(build("cube-impedance"))
    return op, find_eigs(op, SearchWindow(4.7 - 1.9j, 1.0, 1))[0]


@pytest.fixture(scope="session")
def slab3d():
    op = assemble(build("slab-uniform-3d"))
    return op, find_eigs(op, SearchWindow(np.pi - 0.35j, 0.5, 1))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
