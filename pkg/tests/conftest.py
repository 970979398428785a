import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lvsurrogate.experiments import RunConfig, prepare_dataset
from lvsurrogate.grid_model import FixtureKind, build_fixture

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def cigre():
    return build_fixture(FixtureKind.CIGRE_LV_LIKE)


@pytest.fixture(scope="session")
def rural():
    return build_fixture(FixtureKind.RURAL_LV_LIKE)


@pytest.fixture(scope="session")
def cigre_year(cigre):
    """Full synthetic year on the CIGRE-like grid, constant cos phi 0.9."""
    return prepare_dataset(RunConfig(fixture=FixtureKind.CIGRE_LV_LIKE.value, seed=0, cos_phi=0.9), cigre)[1]


@pytest.fixture(scope="session")
def rural_year(rural):
    """Full synthetic year on the rural grid, independent reactive power."""
    return prepare_dataset(RunConfig(fixture=FixtureKind.RURAL_LV_LIKE.value, seed=0, cos_phi=None), rural)[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
