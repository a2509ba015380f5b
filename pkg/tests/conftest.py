import numpy as np
import pytest

from seacache import (
    GridRank,
    PowerLawPrior,
    build_filter_bank,
    make_rf_schedule,
    radial_grid,
)


@pytest.fixture(scope="session")
def rf50():
    return make_rf_schedule(50)


@pytest.fixture(scope="session")
def grid64():
    return radial_grid(GridRank.SPATIAL_2D, (64, 64))


@pytest.fixture(scope="session")
def grid8():
    return radial_grid(GridRank.SPATIAL_2D, (8, 8))


@pytest.fixture(scope="session")
def prior_beta2():
    return PowerLawPrior(A=1.0, beta=2.0)


@pytest.fixture(scope="session")
def bank64(rf50, grid64, prior_beta2):
    return build_filter_bank(rf50, grid64, prior_beta2)


@pytest.fixture(scope="session")
def bank8(grid8, prior_beta2):
    # small bank for oracle-style comparisons; short schedule keeps it cheap
    return build_filter_bank(make_rf_schedule(10), grid8, prior_beta2)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
