"""Shared fixtures: shipped start packs, loaded once per session."""

import numpy as np
import pytest

from dopploc import DopplerSystem, default_pack


@pytest.fixture(scope="session")
def moving_unknown_pack():
    return default_pack(DopplerSystem(n_obs=7))


@pytest.fixture(scope="session")
def moving_known_pack():
    return default_pack(DopplerSystem(n_obs=6, known_frequency=True))


@pytest.fixture(scope="session")
def stationary_unknown_pack():
    return default_pack(DopplerSystem(n_obs=7, stationary=True))


@pytest.fixture(scope="session")
def stationary_known_pack():
    return default_pack(DopplerSystem(n_obs=6, known_frequency=True, stationary=True))


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
