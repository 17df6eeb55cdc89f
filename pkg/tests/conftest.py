import numpy as np
import pytest

from finslerlab.group import BallCache, build_octagon_group
from finslerlab.metrics import InvariantField, conformal_metric, hyperbolic_metric, randers_metric


@pytest.fixture(scope="session")
def gens():
    return build_octagon_group()


@pytest.fixture(scope="session")
def cache(gens):
    return BallCache(gens)


@pytest.fixture(scope="session")
def field(gens, cache):
    # the parameters of the acceptance instances: A=0.5, s=1, L=4
    return InvariantField(0.5, 1.0, 4, gens, cache)


@pytest.fixture(scope="session")
def F_hyp():
    return hyperbolic_metric()


@pytest.fixture(scope="session")
def F_conf(field):
    return conformal_metric(field)


@pytest.fixture(scope="session")
def F_rand(field):
    return randers_metric(field, 0.3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
