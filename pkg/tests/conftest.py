from functools import lru_cache

import numpy as np
import pytest

from hjlab.profiles import solve_halfspace_profile, solve_vss_profile
from hjlab.scaling import scaling_params
from hjlab.solver import Grid, InitialData, run

# "criterion k: PASS/FAIL ..." lines, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@lru_cache(maxsize=None)
def halfspace(q: float):
    return solve_halfspace_profile(scaling_params(q, 1))


@lru_cache(maxsize=None)
def vss(q: float, N: int = 1):
    return solve_vss_profile(scaling_params(q, N))


@lru_cache(maxsize=None)
def small_halfline(q: float = 2.0, n: int = 401):
    """Coarse half-line ladder run on [-4, 6]; cheap enough for unit tests."""
    grid = Grid.cartesian(-4.0, 6.0, n)
    return run(grid, InitialData.infinite_on([(0.0, np.inf)], ladder=[1e2, 1e3]), q, t_end=0.25, t_min=1e-3)


@lru_cache(maxsize=None)
def small_gaussian(q: float, n: int = 201):
    grid = Grid.cartesian(-4.0, 4.0, n)
    return run(grid, InitialData.function(lambda x: 2.0 * np.exp(-x**2)), q, t_end=0.5, t_min=1e-3)


@pytest.fixture(scope="session")
def halfspace_profile():
    return halfspace


@pytest.fixture(scope="session")
def vss_profile():
    return vss


@pytest.fixture(scope="session")
def halfline_run():
    return small_halfline


@pytest.fixture(scope="session")
def gaussian_run():
    return small_gaussian
