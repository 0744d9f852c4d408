import numpy as np
import pytest

from qfdekit.ordered_space import Grid


@pytest.fixture
def grid11():
    return Grid(1.0, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
