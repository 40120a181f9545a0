import math

import numpy as np
import pytest

from gfpc import Field, FlowSpec, Grid, PotentialModel

ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def allen_cahn_flow(dim=2, points=32, epsilon=0.1, stabilizer=None, lo=0.0, hi=2 * math.pi):
    grid = Grid.uniform(dim, points, lo, hi)
    return FlowSpec("allen-cahn", PotentialModel.double_well(epsilon, stabilizer=stabilizer), grid)


def cahn_hilliard_flow(dim=2, points=32, epsilon=0.1, stabilizer=None):
    grid = Grid.uniform(dim, points)
    return FlowSpec("cahn-hilliard", PotentialModel.flory_huggins(epsilon, stabilizer=stabilizer), grid)


def active_instance(seed, points=32):
    """Kink profile plus a zero-mean high-frequency bump: D(0) > 0, feasible."""
    grid = Grid.uniform(1, points)
    x = grid.coordinates()[0]
    flow = FlowSpec("allen-cahn", PotentialModel.double_well(0.1), grid)
    r = np.random.default_rng(seed)
    un = 0.9 * np.tanh(3 * np.sin(x + r.uniform(0, 6)))
    up = un + r.uniform(0.05, 0.3) * np.cos(r.integers(6, 16) * x + r.uniform(0, 6))
    return flow, Field(grid, un), Field(grid, up)
