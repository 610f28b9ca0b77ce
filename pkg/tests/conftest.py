import warnings

import numpy as np
import pytest
from hypothesis import settings

from potmeter.errors import PotmeterWarning
from potmeter.lattice import Gaussian, Grid1D, PhysicalConstants, prepare_state

settings.register_profile("potmeter", deadline=None, max_examples=40)
settings.load_profile("potmeter")


@pytest.fixture
def consts():
    return PhysicalConstants()


@pytest.fixture
def ring():
    return Grid1D(1024, -7.0, 7.0, "ring")


@pytest.fixture
def packet(ring):
    return prepare_state(ring, Gaussian(0.0, 2.0, 1.0))


@pytest.fixture
def small_ring():
    return Grid1D(128, -7.0, 7.0, "ring")


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PotmeterWarning)
        yield


def rng(seed=0):
    return np.random.default_rng(seed)
