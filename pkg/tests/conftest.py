import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rodjunction import scenarios

settings.register_profile("default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def star():
    return scenarios.symmetric_star()


@pytest.fixture(scope="session")
def tee():
    return scenarios.tee_star()
