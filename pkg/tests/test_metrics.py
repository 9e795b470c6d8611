import numpy as np
import pytest
from scipy.optimize import brentq

from error_handler import DegenerateGeometryError, InvalidPartitionError
from modules.array_model import Beamformer, Partition, steering_vector
from modules.metrics import (NOMINAL_BEAMWIDTH, RMSE_INTERCEPT, RMSE_SLOPE, BeamwidthModel, beamwidth_3db,
                             comm_sinr, comm_sinrs, delta_broadening, dinkelbach_targets, evaluate_design,
                             radar_sinr_exact, radar_sinr_lower_bound, rmse_from_beamwidth, rmse_model)
from tests.conftest import random_beamformer, random_partition_vector


def test_rmse_constants():
    assert RMSE_INTERCEPT == pytest.approx(0.7831, abs=1e-4)
    assert RMSE_SLOPE == pytest.approx(0.8839, abs=1e-4)
    model = BeamwidthModel.build(np.pi / 6, 30)
    assert model.c1 == pytest.approx(0.7831 / 30, abs=1e-5)
    assert model.c2 == pytest.approx(0.4419, abs=1e-4)


def test_comm_sinr_matches_direct_formula(small_cfg, small_channels, rng):
    W = random_beamformer(rng, 8, 2, scale=1e-2)
    a = np.array([1, 1, 0, 1, 0, 1, 1, 0])
    for k in range(2):
        h = small_channels.user_channels[k]
        gains = np.abs(h @ np.diag(a) @ W) ** 2
        expected = gains[k] / (gains.sum() - gains[k] + small_cfg.noise_user)
        assert comm_sinr(k, W, a, small_channels, small_cfg) == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(comm_sinrs(W, a, small_channels, small_cfg),
                               [comm_sinr(k, W, a, small_channels, small_cfg) for k in range(2)])


def test_radar_sinr_zero_beamformer(small_cfg, small_channels):
    W = Beamformer.zeros(8, 2)
    p = Partition(np.array([1, 1, 1, 1, 0, 0, 0, 0]), 2)
    assert radar_sinr_exact(W, p, small_channels, small_cfg) == 0.0
    assert radar_sinr_lower_bound(W, p, small_channels, small_cfg) == 0.0


def test_radar_sinr_needs_a_receive_antenna(small_cfg, small_channels, rng):
    with pytest.raises(InvalidPartitionError):
        radar_sinr_exact(random_beamformer(rng, 8, 2), np.ones(8), small_channels, small_cfg)


def test_radar_sinr_exact_matches_direct_formula(small_cfg, small_channels, rng):
    W = random_beamformer(rng, 8, 2, scale=0.1)
    a = np.array([0, 1, 1, 0, 1, 0, 1, 0])
    A, I = np.diag(a), np.eye(8)
    h_t, H_si = small_channels.target_channel, small_channels.si_channel
    echo = np.linalg.norm((I - A) @ np.outer(h_t, h_t) @ A @ W) ** 2
    leak = np.linalg.norm((I - A) @ H_si @ A @ W) ** 2
    expected = small_cfg.rcs_variance * echo / (small_cfg.noise_radar * 4 + leak)
    assert radar_sinr_exact(W, a, small_channels, small_cfg) == pytest.approx(expected, rel=1e-10)


def test_lower_bound_never_exceeds_exact(small_cfg, small_channels, rng):
    for _ in range(50):
        a = random_partition_vector(rng, 8, 2)
        W = random_beamformer(rng, 8, 2, scale=10 ** rng.uniform(-4, 1))
        lb = radar_sinr_lower_bound(W, a, small_channels, small_cfg)
        exact = radar_sinr_exact(W, a, small_channels, small_cfg)
        assert lb <= exact * (1 + 1e-12)


def test_beamwidth_split_reproduces_q0():
    model = BeamwidthModel.build(0.4, 12)
    np.testing.assert_allclose(model.Q2 - model.Q1, model.Q0, atol=1e-12 * np.abs(model.Q0).max())
    assert np.linalg.eigvalsh(model.Q1)[0] > 0
    assert np.linalg.eigvalsh(model.Q2)[0] > 0


def _exact_broadening(theta_t, N):
    """Half-power root of the full-array pattern minus theta_0."""
    u = np.arange(N)

    def power(theta):
        pattern = np.sum(np.exp(-1j * np.pi * u * (np.sin(theta) - np.sin(theta_t))))
        return abs(pattern) ** 2 / N ** 2 - 0.5

    upper = np.arcsin(min(np.sin(theta_t) + 1.5 / N, 1.0))
    root = brentq(power, theta_t + 1e-9, upper, xtol=1e-14)
    return root - (theta_t + NOMINAL_BEAMWIDTH / (2 * N))


@pytest.mark.parametrize("theta_t", [0.0, np.pi / 6])
@pytest.mark.parametrize("N", [16, 30])
def test_delta_matches_half_power_root(theta_t, N):
    model = BeamwidthModel.build(theta_t, N)
    delta = delta_broadening(np.ones(N), model)
    exact = _exact_broadening(theta_t, N)
    assert abs(delta - exact) <= 0.2 * abs(exact) + 0.02 * NOMINAL_BEAMWIDTH / N


def test_delta_of_empty_receive_set_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        delta_broadening(np.zeros(10), BeamwidthModel.build(0.3, 10))


def test_beamwidth_model_receive_pattern_reference():
    model = BeamwidthModel.build(0.2, 8)
    expected = steering_vector(model.theta_0, 8) * np.conj(steering_vector(0.2, 8))
    np.testing.assert_allclose(model.h, expected)
    b = np.array([1, 0, 0, 1, 1, 0, 1, 1.0])
    numerator, _ = model.broadening_terms(b)
    assert numerator == pytest.approx(2 * abs(b @ expected) ** 2 - b.sum() ** 2)


def test_rmse_forms_agree():
    for delta, sinr, N in [(0.0, 10.0, 30), (0.01, 3.0, 16), (-0.004, 250.0, 8)]:
        assert rmse_model(delta, sinr, N) == pytest.approx(
            rmse_from_beamwidth(beamwidth_3db(delta, N), sinr), rel=1e-12)


def test_rmse_nominal_case():
    assert rmse_model(0.0, 1.0, 30) == pytest.approx(1.772 / (30 * 1.6 * np.sqrt(2)))
    with pytest.raises(ValueError):
        rmse_model(0.0, 0.0, 30)


def test_dinkelbach_targets_are_the_ratio_values(small_cfg, small_channels, rng):
    model = BeamwidthModel.build(small_cfg.target_angle, 8)
    a = np.array([1, 0, 1, 1, 0, 1, 0, 0.0])
    W = random_beamformer(rng, 8, 2, scale=0.1)
    t1, t2 = dinkelbach_targets(W, a, 1 - a, small_channels, small_cfg, model)
    assert t1 == pytest.approx(2 * delta_broadening(1 - a, model))
    assert t2 == pytest.approx(radar_sinr_lower_bound(W, a, small_channels, small_cfg))
    f = (model.c1 + model.c2 * t1) / np.sqrt(t2)
    assert f == pytest.approx(rmse_model(delta_broadening(1 - a, model), t2, 8), rel=1e-12)


def test_evaluate_design_report(small_cfg, small_channels, rng):
    p = Partition(np.array([1, 1, 1, 0, 0, 1, 0, 0]), 2)
    W = Beamformer(random_beamformer(rng, 8, 2, scale=0.1), 2)
    report = evaluate_design(p, W, small_channels, small_cfg)
    assert report.sinr_comm.shape == (2,)
    assert report.sinr_radar_lb <= report.sinr_radar_exact
    assert report.beamwidth_3db == pytest.approx(1.772 / 8 + 2 * report.delta)
    assert report.rmse_model == pytest.approx(rmse_model(report.delta, report.sinr_radar_exact, 8))
    assert report.meets_sinr([0.0, 0.0])
    assert not report.meets_sinr([np.inf, np.inf])
