import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid1():
    from stochheat.lattice import make_grid
    return make_grid(1, 16.0, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
