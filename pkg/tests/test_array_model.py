import numpy as np
import pytest

from error_handler import ConfigurationError, InvalidPartitionError
from modules.array_model import (Beamformer, Partition, centered_positions, child_sequence, draw_channels,
                                 gen_si_channel, gen_target_channel, gen_user_channels, path_loss, perturb_si_channel,
                                 si_amplitude_for_ratio, steering_matrix, steering_vector, trial_generators,
                                 trial_seed_sequences)
from scenario_settings import ScenarioConfig


def test_steering_vector_broadside_is_all_ones():
    np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4))


def test_steering_vector_endfire_two_elements():
    np.testing.assert_allclose(steering_vector(np.pi / 2, 2), [-1j, 1j], atol=1e-15)


def test_steering_vector_matches_elementwise_formula():
    theta, N = np.pi / 6, 30
    expected = [np.exp(-1j * np.pi * ((N - 1) / 2 - n) * np.sin(theta)) for n in range(N)]
    h = steering_vector(theta, N)
    np.testing.assert_allclose(h, expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.abs(h), 1.0)


def test_steering_vector_mirror_angle_is_conjugate():
    np.testing.assert_allclose(steering_vector(-0.4, 9), np.conj(steering_vector(0.4, 9)))


def test_steering_vector_rejects_empty_array():
    with pytest.raises(ValueError):
        steering_vector(0.1, 0)


def test_steering_matrix_rows_match_steering_vectors():
    thetas = np.array([-0.3, 0.0, 0.7])
    M = steering_matrix(thetas, centered_positions(6))
    for row, theta in zip(M, thetas):
        np.testing.assert_allclose(row, steering_vector(theta, 6))


def test_path_loss_reference_and_decay():
    cfg = ScenarioConfig()
    assert path_loss(cfg.ref_distance, cfg, 2.8) == pytest.approx(cfg.pathloss_ref)
    assert path_loss(10.0, cfg, 2.0) == pytest.approx(1e-3 * 1e-2)
    with pytest.raises(ConfigurationError):
        path_loss(0.0, cfg, 2.0)


def test_target_channel_is_scaled_steering_vector():
    cfg = ScenarioConfig()
    h_t, beta = gen_target_channel(cfg)
    assert beta == pytest.approx(np.sqrt(1e-3 * 30.0 ** -2.8))
    np.testing.assert_allclose(h_t, beta * steering_vector(cfg.target_angle, cfg.n_antennas))


def test_si_channel_constant_modulus_and_symmetric():
    cfg = ScenarioConfig(n_antennas=10)
    H = gen_si_channel(cfg)
    np.testing.assert_allclose(np.abs(H), cfg.si_amplitude)
    np.testing.assert_allclose(H, H.T)


def test_pure_los_users_have_path_loss_magnitude():
    cfg = ScenarioConfig(n_antennas=12, n_users=3, rician_factor=float("inf"))
    h = gen_user_channels(cfg, np.random.default_rng(0), angles=np.array([0.1, -0.5, 1.0]))
    np.testing.assert_allclose(np.abs(h), np.sqrt(path_loss(50.0, cfg, cfg.pathloss_exp_user)))


def test_si_amplitude_for_ratio_sets_frobenius_ratio():
    cfg = ScenarioConfig(n_antennas=16, n_users=4)
    cfg = cfg.with_updates(si_amplitude=si_amplitude_for_ratio(55.0, cfg))
    h_t, _ = gen_target_channel(cfg)
    ratio = np.linalg.norm(gen_si_channel(cfg)) ** 2 / np.linalg.norm(np.outer(h_t, h_t)) ** 2
    assert 10 * np.log10(ratio) == pytest.approx(55.0)


def test_perturbation_is_identity_without_uncertainty(rng):
    cfg = ScenarioConfig(n_antennas=6, n_users=2)
    H = gen_si_channel(cfg)
    assert perturb_si_channel(H, cfg, rng) is H


def test_perturbation_variance_follows_uncertainty(rng):
    cfg = ScenarioConfig(n_antennas=40, n_users=2, si_uncertainty=0.1)
    H = gen_si_channel(cfg)
    error = perturb_si_channel(H, cfg, rng) - H
    assert np.mean(np.abs(error) ** 2) == pytest.approx(cfg.si_amplitude ** 2 * 0.1, rel=0.1)


def test_trial_streams_are_reproducible_and_independent():
    first = draw_channels(ScenarioConfig(), trial_generators(trial_seed_sequences(5, 3)[1])[0])
    again = draw_channels(ScenarioConfig(), trial_generators(trial_seed_sequences(5, 3)[1])[0])
    other = draw_channels(ScenarioConfig(), trial_generators(trial_seed_sequences(5, 3)[2])[0])
    np.testing.assert_array_equal(first.user_channels, again.user_channels)
    assert not np.allclose(first.user_channels, other.user_channels)


def test_child_streams_match_spawn_without_consuming_it():
    parent = trial_seed_sequences(8, 2)[1]
    first = np.random.default_rng(child_sequence(parent, 3)).standard_normal(4)
    again = np.random.default_rng(child_sequence(parent, 3)).standard_normal(4)
    np.testing.assert_array_equal(first, again)
    spawned = parent.spawn(4)[3]
    np.testing.assert_array_equal(np.random.default_rng(spawned).standard_normal(4), first)


def test_rayleigh_users_have_path_loss_variance():
    cfg = ScenarioConfig(n_antennas=100, n_users=1, rician_factor=0.0)
    rng = np.random.default_rng(12)
    h = np.concatenate([gen_user_channels(cfg, rng)[0] for _ in range(1000)])
    gain = path_loss(cfg.user_distances[0], cfg, cfg.pathloss_exp_user)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(gain, rel=0.02)
    assert abs(np.mean(h)) <= 0.02 * np.sqrt(gain)


def test_rician_users_keep_path_loss_power():
    # kappa = 3 dB taken as 2
    cfg = ScenarioConfig(n_antennas=100, n_users=1, rician_factor=2.0, user_distances=(50.0,))
    rng = np.random.default_rng(13)
    angle = np.array([0.4])
    draws = np.array([gen_user_channels(cfg, rng, angles=angle)[0] for _ in range(1000)])
    gain = 1e-3 * 50.0 ** -3.5
    assert np.mean(np.sum(np.abs(draws) ** 2, axis=1)) / 100 == pytest.approx(gain, rel=0.02)
    los = np.exp(-1j * np.pi * np.arange(100) * np.sin(0.4))
    np.testing.assert_allclose(draws.mean(axis=0) / np.sqrt(gain), np.sqrt(2 / 3) * los, atol=0.15)


def test_fixed_user_angles_are_kept():
    cfg = ScenarioConfig(n_antennas=8, n_users=2, user_angles=(0.2, -0.3), redraw_user_angles=False)
    ch = draw_channels(cfg, np.random.default_rng(1))
    np.testing.assert_allclose(ch.user_angles, [0.2, -0.3])


def test_channel_set_is_read_only(small_channels):
    with pytest.raises(ValueError):
        small_channels.target_channel[0] = 0
    np.testing.assert_allclose(np.abs(small_channels.target_steering), 1.0)


class TestPartition:

    def test_derived_quantities(self):
        p = Partition(np.array([1, 0, 1, 1, 0]), n_users=2)
        np.testing.assert_array_equal(p.b, [0, 1, 0, 0, 1])
        assert (p.n_transmit, p.n_receive) == (3, 2)
        np.testing.assert_array_equal(p.transmit_indices, [0, 2, 3])
        np.testing.assert_array_equal(p.receive_indices, [1, 4])
        np.testing.assert_array_equal(p.matrix, np.diag([1.0, 0, 1, 1, 0]))

    def test_from_transmit_indices(self):
        p = Partition.from_transmit_indices([3, 0], 4, 1)
        np.testing.assert_array_equal(p.a, [1, 0, 0, 1])

    @pytest.mark.parametrize("a", [[1, 1, 1, 1], [1, 0, 0, 0], [0.5, 1, 0, 1], [[1, 0], [0, 1]]])
    def test_invalid_vectors_rejected(self, a):
        with pytest.raises(InvalidPartitionError):
            Partition(np.array(a), n_users=2)


class TestBeamformer:

    def test_column_roles(self, rng):
        W = rng.standard_normal((4, 6)) + 0j
        bf = Beamformer(W, 2)
        np.testing.assert_array_equal(bf.comm, W[:, :2])
        np.testing.assert_array_equal(bf.radar, W[:, 2:])

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            Beamformer(np.zeros((4, 5)), 2)

    def test_masked_power_counts_transmit_rows_only(self, rng):
        W = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
        bf = Beamformer(W, 1)
        p = Partition(np.array([1, 0, 1, 0]), 1)
        expected = np.sum(np.abs(W[[0, 2]]) ** 2)
        assert bf.transmit_power(p.a) == pytest.approx(expected)
        masked = bf.masked(p)
        np.testing.assert_array_equal(masked.W[[1, 3]], 0)
        assert masked.transmit_power(np.ones(4)) == pytest.approx(expected)
