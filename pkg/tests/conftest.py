import numpy as np
import pytest

from dirac_eq.grid import GridSpec, RealField8


@pytest.fixture
def grid16():
    return GridSpec(16, 16.0)


@pytest.fixture
def grid32():
    return GridSpec(32, 32.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, rng) -> RealField8:
    return RealField8(grid, rng.standard_normal((8,) + grid.shape))
