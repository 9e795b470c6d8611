"""Shared fixtures: a small scenario that every solver handles in well under a second."""

import os

os.environ.setdefault("ISAC_LOG_TO_FILE", "0")
os.environ.setdefault("ISAC_LOG_LEVEL", "WARNING")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from modules.array_model import draw_channels  # noqa: E402
from scenario_settings import ScenarioConfig  # noqa: E402


@pytest.fixture
def small_cfg():
    return ScenarioConfig(n_antennas=8, n_users=2, max_iters=30, snapshots=64, music_grid_size=1024, rng_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def small_channels(small_cfg):
    return draw_channels(small_cfg, np.random.default_rng(11))


def random_partition_vector(rng, n_antennas, n_users):
    """Binary a with a transmit count drawn uniformly from [K, N-1]."""
    n_transmit = int(rng.integers(n_users, n_antennas))
    a = np.zeros(n_antennas, dtype=int)
    a[rng.choice(n_antennas, size=n_transmit, replace=False)] = 1
    return a


def random_beamformer(rng, n_antennas, n_users, scale=1.0):
    shape = (n_antennas, n_antennas + n_users)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
