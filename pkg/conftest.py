# conftest.py: shared fixtures and the --runslow switch for full-resolution runs
import numpy as np
import pytest

from anisotropy import Euclidean, WeightedL1
from grid_fields import GridDomain, shape


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-resolution acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def l1():
    return WeightedL1(2)


@pytest.fixture
def euclid():
    return Euclidean(2)


@pytest.fixture
def small_domain():
    """[-1.5, 1.5]^2 with 48 cells per axis."""
    return GridDomain.square(1.5, 48)


@pytest.fixture
def disk(small_domain):
    return shape("ball", small_domain, radius=1.0)
