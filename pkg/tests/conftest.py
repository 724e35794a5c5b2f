import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def grid16():
    from mgspectral.spectral import Grid
    return Grid.cube(16)


@pytest.fixture(scope="session")
def grid32():
    from mgspectral.spectral import Grid
    return Grid.cube(32)
