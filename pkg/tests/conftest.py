import numpy as np
import pytest

from speedscale import CostModel, ScaledGeometric, StateGrid, arrival_pmf, value_iteration


@pytest.fixture(scope="session")
def pmf():
    return arrival_pmf(ScaledGeometric())


@pytest.fixture(scope="session")
def quad():
    return CostModel.quadratic()


@pytest.fixture(scope="session")
def grid(pmf):
    return StateGrid(pmf.delta, 60.0)


@pytest.fixture(scope="session")
def via(pmf, quad, grid):
    return value_iteration(quad, pmf, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
