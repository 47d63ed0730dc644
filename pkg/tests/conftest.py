import numpy as np
import pytest

from maketake import ModelParams, solve_matrix_exp, validate


@pytest.fixture(scope="session")
def vp_std():
    """Full standard parameter set (q_bar = 50)."""
    return validate(ModelParams())


@pytest.fixture(scope="session")
def vp10():
    """Standard scalars with the inventory cap reduced to 10."""
    return validate(ModelParams(q_bar=10))


@pytest.fixture(scope="session")
def grid_ex10(vp10):
    return solve_matrix_exp(vp10, "exchange")


@pytest.fixture(scope="session")
def grid_be10(vp10):
    return solve_matrix_exp(vp10, "benchmark")


@pytest.fixture(scope="session")
def grids_std(vp_std):
    return {
        "exchange": solve_matrix_exp(vp_std, "exchange"),
        "benchmark": solve_matrix_exp(vp_std, "benchmark"),
    }


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(987654321)
