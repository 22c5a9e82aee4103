import pytest
from hypothesis import HealthCheck, settings

from nonauto.triple import build_fem_triple

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tri15():
    return build_fem_triple(15)


@pytest.fixture(scope="session")
def tri31():
    return build_fem_triple(31)
