import numpy as np
import pytest

from error_handler import InfeasibleDesignError
from modules.array_model import Beamformer, Partition, draw_channels
from modules.heuristic_design import (comm_power_minimization, echo_matrix, echo_surrogate, gamma_update,
                                      heuristic_objective, ideal_sensing_beamformer, initial_beamformer,
                                      line_search_receive_count, optimal_receive_count, partition_by_power,
                                      receive_count_bound, receive_count_objective, restricted_power_minimization,
                                      run_algorithm2, si_eigenvalue, sinr_surrogate_values, whitened_users)
from modules.metrics import comm_sinrs, radar_sinr_exact, radar_sinr_lower_bound, rmse_from_beamwidth
from scenario_settings import ScenarioConfig
from tests.conftest import random_beamformer, random_partition_vector


class TestReceiveCount:

    def test_noise_limited_search_picks_half_the_array(self):
        cfg = ScenarioConfig()
        ch = draw_channels(cfg, np.random.default_rng(0))
        assert line_search_receive_count(0.0, ch.target_gain, cfg) == 15
        assert optimal_receive_count(ch, cfg, lambda_m=0.0) == 9

    def test_small_even_array(self, small_cfg, small_channels):
        assert line_search_receive_count(0.0, small_channels.target_gain, small_cfg) == 4
        assert optimal_receive_count(small_channels, small_cfg, lambda_m=0.0) == 2

    def test_correction_is_clamped_to_one(self):
        cfg = ScenarioConfig(n_antennas=4, n_users=3)
        ch = draw_channels(cfg, np.random.default_rng(0))
        assert optimal_receive_count(ch, cfg) == 1

    def test_line_search_matches_exhaustive_grid(self, small_cfg, small_channels):
        lam = si_eigenvalue(small_channels)
        grid = np.arange(1, 7)
        values = [receive_count_objective(n, lam, small_channels.target_gain, small_cfg) for n in grid]
        assert line_search_receive_count(lam, small_channels.target_gain, small_cfg) == grid[int(np.argmin(values))]

    def test_si_eigenvalue_is_largest_eigenvalue(self, small_channels):
        D = small_channels.si_channel @ np.diag(np.conj(small_channels.target_channel))
        assert si_eigenvalue(small_channels) == pytest.approx(np.linalg.eigvalsh(D.conj().T @ D)[-1])

    def test_strong_leakage_enlarges_receive_array(self, small_cfg, small_channels):
        weak = line_search_receive_count(0.0, small_channels.target_gain, small_cfg)
        strong = line_search_receive_count(1e6 * si_eigenvalue(small_channels), small_channels.target_gain,
                                           small_cfg)
        assert strong >= weak

    def test_bound_holds_for_ideal_beamformer(self, small_cfg, small_channels, rng):
        W = ideal_sensing_beamformer(small_channels, small_cfg)
        h_t = small_channels.target_channel
        np.testing.assert_allclose(W.W @ W.W.conj().T,
                                   small_cfg.power_budget / (small_channels.target_gain ** 2 * 8)
                                   * np.outer(np.conj(h_t), h_t), atol=1e-12 * small_cfg.power_budget)
        lam = si_eigenvalue(small_channels)
        for _ in range(20):
            p = Partition(random_partition_vector(rng, 8, 2), 2)
            leakage = np.linalg.norm(small_channels.si_channel @ W.effective(p.a)) ** 2
            assert leakage <= (small_cfg.power_budget / (small_channels.target_gain ** 2 * 8)
                               * lam * p.n_transmit * (1 + 1e-9))
            sinr_lb = radar_sinr_lower_bound(W, p, small_channels, small_cfg)
            bound = receive_count_bound(p.n_receive, lam, small_channels.target_gain, small_cfg)
            assert rmse_from_beamwidth(1.772 / p.n_receive, sinr_lb) ** 2 <= bound * (1 + 1e-9)


class TestPowerMinimization:

    def test_single_user_closed_form(self):
        cfg = ScenarioConfig(n_antennas=8, n_users=1)
        ch = draw_channels(cfg, np.random.default_rng(3))
        W = comm_power_minimization(ch, cfg)
        h = ch.user_channels[0]
        w = W.comm[:, 0]
        expected = cfg.sinr_thresholds[0] * cfg.noise_user / np.linalg.norm(h) ** 2
        assert np.linalg.norm(w) ** 2 == pytest.approx(expected, rel=1e-5)
        alignment = abs(np.vdot(np.conj(h), w)) / (np.linalg.norm(h) * np.linalg.norm(w))
        assert alignment == pytest.approx(1.0, abs=1e-6)

    def test_targets_met_with_equality(self, small_cfg, small_channels):
        W = comm_power_minimization(small_channels, small_cfg)
        np.testing.assert_allclose(comm_sinrs(W, np.ones(8), small_channels, small_cfg),
                                   small_cfg.sinr_thresholds, rtol=1e-5)
        np.testing.assert_array_equal(W.radar, 0)

    def test_power_scales_with_noise(self, small_cfg, small_channels):
        base = comm_power_minimization(small_channels, small_cfg).transmit_power(np.ones(8))
        noisier = small_cfg.with_updates(noise_user=2 * small_cfg.noise_user)
        doubled = comm_power_minimization(small_channels, noisier).transmit_power(np.ones(8))
        assert doubled == pytest.approx(2 * base, rel=1e-4)

    def test_restricted_support(self, small_cfg, small_channels):
        W = restricted_power_minimization(small_channels, small_cfg, [1, 3, 4, 6])
        np.testing.assert_array_equal(W.W[[0, 2, 5, 7]], 0)
        sinrs = comm_sinrs(W, np.ones(8), small_channels, small_cfg)
        assert np.all(sinrs >= np.asarray(small_cfg.sinr_thresholds) * (1 - 1e-5))

    def test_single_antenna_cannot_serve_two_users(self, small_cfg, small_channels):
        with pytest.raises(InfeasibleDesignError):
            restricted_power_minimization(small_channels, small_cfg, [2])


class TestPartitionByPower:

    @staticmethod
    def _rows(powers):
        W = np.zeros((len(powers), len(powers) + 1), dtype=complex)
        W[:, 0] = np.sqrt(powers)
        return W

    def test_strongest_rows_transmit(self):
        p = partition_by_power(self._rows([3.0, 1.0, 2.0, 0.0]), 2, 1)
        np.testing.assert_array_equal(p.a, [1, 0, 1, 0])

    def test_ties_go_to_lower_index(self):
        p = partition_by_power(self._rows([1.0, 1.0, 1.0, 1.0]), 2, 1)
        np.testing.assert_array_equal(p.a, [1, 1, 0, 0])

    def test_matches_sort_oracle(self, rng):
        for _ in range(20):
            W = random_beamformer(rng, 10, 3)
            n_transmit = int(rng.integers(3, 10))
            p = partition_by_power(W, n_transmit, 3)
            top = np.argsort(-np.sum(np.abs(W) ** 2, axis=1), kind="stable")[:n_transmit]
            assert set(p.transmit_indices) == set(top)


class TestDinkelbachPieces:

    def test_gamma_of_zero_beamformer(self, small_cfg, small_channels):
        p = Partition(np.array([1, 1, 0, 0, 1, 0, 1, 0]), 2)
        assert gamma_update(Beamformer.zeros(8, 2), p, small_channels, small_cfg) == 0.0

    def test_gamma_is_radar_sinr_without_rcs(self, small_cfg, small_channels, rng):
        p = Partition(np.array([1, 1, 0, 0, 1, 0, 1, 0]), 2)
        W = random_beamformer(rng, 8, 2, scale=0.1)
        gamma = gamma_update(W, p, small_channels, small_cfg)
        exact = radar_sinr_exact(W, p, small_channels, small_cfg)
        assert gamma * small_cfg.rcs_variance == pytest.approx(exact, rel=1e-12)

    def test_objective_vanishes_at_its_own_ratio(self, small_cfg, small_channels, rng):
        for _ in range(10):
            p = Partition(random_partition_vector(rng, 8, 2), 2)
            W = random_beamformer(rng, 8, 2, scale=10 ** rng.uniform(-3, 0))
            gamma = gamma_update(W, p, small_channels, small_cfg)
            scale = np.linalg.norm(echo_matrix(p, small_channels) @ W) ** 2
            assert abs(heuristic_objective(W, p, gamma, small_channels, small_cfg)) <= 1e-10 * scale

    def test_echo_surrogate_is_tangent_minorant(self, small_channels, rng):
        p = Partition(np.array([0, 1, 1, 0, 1, 1, 0, 0]), 2)
        T = echo_matrix(p, small_channels)
        W_m = random_beamformer(rng, 8, 2)
        exact_m = np.linalg.norm(T @ W_m) ** 2
        assert echo_surrogate(W_m, W_m, p, small_channels) == pytest.approx(exact_m, rel=1e-10)
        for _ in range(100):
            W = W_m + random_beamformer(rng, 8, 2, scale=10 ** rng.uniform(-3, 1))
            assert echo_surrogate(W, W_m, p, small_channels) <= np.linalg.norm(T @ W) ** 2 * (1 + 1e-12)

    def test_sinr_surrogate_is_tangent_minorant(self, small_cfg, small_channels, rng):
        H = whitened_users(small_channels, small_cfg)
        thresholds = small_cfg.sinr_thresholds
        W_m = random_beamformer(rng, 8, 2, scale=1e-3)
        x_m = H @ W_m
        signal = sinr_surrogate_values(x_m, x_m, [0.0, 0.0])
        np.testing.assert_allclose(signal, np.abs(np.diag(x_m)) ** 2, rtol=1e-10)
        true_m = [abs(x_m[k, k]) ** 2 - thresholds[k] * (np.sum(np.abs(x_m[k]) ** 2) - abs(x_m[k, k]) ** 2 + 1)
                  for k in range(2)]
        np.testing.assert_allclose(sinr_surrogate_values(x_m, x_m, thresholds), true_m, rtol=1e-10)
        for _ in range(100):
            x = H @ (W_m + random_beamformer(rng, 8, 2, scale=1e-3))
            true = [abs(x[k, k]) ** 2 - thresholds[k] * (np.sum(np.abs(x[k]) ** 2) - abs(x[k, k]) ** 2 + 1)
                    for k in range(2)]
            assert np.all(sinr_surrogate_values(x, x_m, thresholds) <= np.asarray(true) + 1e-9 * np.abs(true))


class TestAlgorithm2:

    def test_design_is_feasible_and_ratio_never_drops(self, small_cfg, small_channels):
        result = run_algorithm2(small_channels, small_cfg)
        p, W = result.partition, result.beamformer
        assert result.design == "alg2"
        assert W.transmit_power(p.a) <= small_cfg.power_budget * (1 + 1e-6)
        assert result.metrics.meets_sinr(small_cfg.sinr_thresholds)
        gamma = result.trace["gamma"].to_numpy()
        assert np.all(np.diff(gamma) >= -1e-6 * gamma[:-1])
        assert list(result.trace.columns) == ["iter", "objective", "normalized_objective", "gamma"]
        assert result.iterations <= small_cfg.max_iters

    def test_partition_follows_line_search_and_power(self, small_cfg, small_channels):
        result = run_algorithm2(small_channels, small_cfg)
        n_receive = optimal_receive_count(small_channels, small_cfg)
        assert result.partition.n_receive == n_receive
        W_tilde = comm_power_minimization(small_channels, small_cfg)
        expected = partition_by_power(W_tilde, 8 - n_receive, 2)
        np.testing.assert_array_equal(result.partition.a, expected.a)

    def test_override_keeps_partition(self, small_cfg, small_channels):
        p = Partition.from_transmit_indices([0, 2, 4, 6], 8, 2)
        result = run_algorithm2(small_channels, small_cfg, partition_override=p, design="custom")
        np.testing.assert_array_equal(result.partition.a, p.a)
        np.testing.assert_array_equal(result.beamformer.W[p.receive_indices], 0)
        assert result.design == "custom"

    def test_initial_beamformer_respects_partition(self, small_cfg, small_channels):
        p = Partition.from_transmit_indices([1, 2, 5], 8, 2)
        W0 = initial_beamformer(p, small_channels, small_cfg)
        np.testing.assert_array_equal(W0.W[p.receive_indices], 0)
        assert W0.transmit_power(p.a) <= small_cfg.power_budget

    def test_tiny_budget_is_infeasible(self, small_cfg, small_channels):
        with pytest.raises(InfeasibleDesignError):
            run_algorithm2(small_channels, small_cfg.with_updates(power_budget=1e-9))


@pytest.mark.slow
def test_algorithm2_converges_quickly():
    cfg = ScenarioConfig(n_antennas=16, n_users=4)
    converged = 0
    for seed in range(50):
        ch = draw_channels(cfg, np.random.default_rng(seed))
        result = run_algorithm2(ch, cfg)
        converged += result.status == "converged" and result.iterations <= 10
    assert converged >= 40
