import pytest
from hypothesis import HealthCheck, settings

from fairpool.city import gen_grid_city

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def grid55():
    """Standard 5x5 unit-minute grid used across several suites."""
    return gen_grid_city(5, 5, edge_minutes=1.0, delta=5.0, num_neighborhoods=4, seed=7)
