import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from odpricing import data_pipeline as dp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ex1():
    return dp.example1(), dp.example1_phantom()


@pytest.fixture
def ex2():
    return dp.example2(), dp.example2_phantom()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_outcome():
    """The hand-specified outcome of the two-location example at flat prices."""
    from types import SimpleNamespace

    x = np.array([[0.0, 1.0], [0.0, 20.0]])
    y = np.array([[0.0, 1.0], [1.0, 20.0]])
    p = np.array([[46.05, 92.10], [0.0, 0.0]])
    return SimpleNamespace(x=x, y=y, p=p)


def optimal_outcome():
    from types import SimpleNamespace

    x = np.array([[0.0, 4.0], [0.0, 8.0]])
    y = np.array([[0.0, 4.0], [4.0, 8.0]])
    return SimpleNamespace(x=x, y=y)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
