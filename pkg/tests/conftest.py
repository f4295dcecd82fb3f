import numpy as np
import pytest

from scattersense.config import SystemConfig


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def small_cfg():
    return SystemConfig(n_c=128, n_t=16, n_c_trunc=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
