import numpy as np
import pytest

from error_handler import InvalidPartitionError
from modules.baselines import BaselineKind, make_partition, run_baseline
from scenario_settings import ScenarioConfig


@pytest.fixture
def cfg4():
    return ScenarioConfig(n_antennas=4, n_users=1)


def test_even_split_takes_first_half(cfg4):
    np.testing.assert_array_equal(make_partition(BaselineKind.even(), cfg4).a, [1, 1, 0, 0])


def test_contiguous_split(cfg4):
    np.testing.assert_array_equal(make_partition(BaselineKind.contiguous(3), cfg4).a, [1, 1, 1, 0])


def test_joint_transmit_count_overrides_kind(cfg4):
    p = make_partition(BaselineKind.contiguous(3), cfg4, alg1_nt=2)
    np.testing.assert_array_equal(p.a, [1, 1, 0, 0])


def test_even_split_needs_even_array():
    with pytest.raises(InvalidPartitionError):
        make_partition(BaselineKind.even(), ScenarioConfig(n_antennas=7, n_users=2))


def test_missing_transmit_count_rejected():
    with pytest.raises(InvalidPartitionError):
        BaselineKind("cont")
    with pytest.raises(InvalidPartitionError):
        BaselineKind("checkerboard")


@pytest.mark.parametrize("n_antennas, n_users, n_transmit", [(4, 1, 0), (4, 1, 4), (8, 2, 1), (8, 2, 9)])
def test_transmit_count_out_of_range(n_antennas, n_users, n_transmit):
    cfg = ScenarioConfig(n_antennas=n_antennas, n_users=n_users)
    with pytest.raises(InvalidPartitionError):
        make_partition(BaselineKind.random(n_transmit), cfg)


def test_random_split_is_reproducible(small_cfg):
    first = make_partition(BaselineKind.random(5, seed=3), small_cfg)
    second = make_partition(BaselineKind.random(5, seed=3), small_cfg)
    np.testing.assert_array_equal(first.a, second.a)
    assert first.n_transmit == 5


def test_random_split_uses_given_generator(small_cfg):
    seen = {tuple(make_partition(BaselineKind.random(4), small_cfg, rng=np.random.default_rng(s)).a)
            for s in range(20)}
    assert len(seen) > 1
    assert all(sum(a) == 4 for a in seen)


def test_even_baseline_design_is_feasible(small_cfg, small_channels):
    result = run_baseline(BaselineKind.even(), small_channels, small_cfg)
    assert result.design == "even"
    np.testing.assert_array_equal(result.partition.a, [1, 1, 1, 1, 0, 0, 0, 0])
    assert result.metrics.meets_sinr(small_cfg.sinr_thresholds)
    assert result.beamformer.transmit_power(result.partition.a) <= small_cfg.power_budget * (1 + 1e-6)
    np.testing.assert_array_equal(result.beamformer.W[result.partition.receive_indices], 0)
