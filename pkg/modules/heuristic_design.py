"""
Heuristic Design
Receive-count line search, power-based antenna selection and Dinkelbach/MM beamforming for a fixed partition.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import cvxpy as cp
import numpy as np
import pandas as pd

from error_handler import InfeasibleDesignError, SolverError, log_operation
from modules.array_model import Beamformer, ChannelSet, Partition
from modules.convex_kernel import (SecondOrderCone, SocpProblem, complex_matrix_to_real, real_to_complex,
                                   solve_model, solve_socp)
from modules.metrics import DesignResult, comm_sinrs, evaluate_design
from scenario_settings import ScenarioConfig

logger = logging.getLogger(__name__)

# 1.772^2 / (1.6^2 * 2)
RECEIVE_BOUND_CONSTANT = 1.772 ** 2 / 5.12
SINR_REL_TOL = 1e-6
ZERO_ROW = 1e-9


@dataclass
class Alg2State:
    """Iterate of the fixed-partition beamforming loop."""
    partition: Partition
    W: Beamformer
    gamma: float = 0.0
    lambda_m: float = 0.0
    T: Optional[np.ndarray] = None
    objective_trace: List[float] = field(default_factory=list)
    gamma_trace: List[float] = field(default_factory=list)


def abs_squared(expr) -> cp.Expression:
    """Sum of squared magnitudes of a complex cvxpy expression."""
    return cp.sum_squares(cp.real(expr)) + cp.sum_squares(cp.imag(expr))


def whitened_users(ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """h_k / sigma_k, so that every user sees unit noise power."""
    return ch.user_channels / np.sqrt(np.asarray(cfg.noise_users))[:, None]


def sinr_surrogate_constraints(gains, expansion: np.ndarray, thresholds: Sequence[float]) -> list:
    """
    Concave lower bounds of the SINR constraints, tight at the expansion point.

    Args:
        gains: K x (K+N) cvxpy expression, entry (k, j) = h_k^T A w_j / sigma_k.
        expansion: The same gains evaluated at the expansion point.
        thresholds: Linear SINR targets Gamma_k.

    Returns:
        One cvxpy constraint per user:
        2 Re{x_kk e_k} - |e_k|^2 - Gamma_k sum_{j != k} |x_kj|^2 - Gamma_k >= 0 with e_k = conj(x_kk^(m)).
    """
    K = len(thresholds)
    constraints = []
    for k in range(K):
        e_k = np.conj(expansion[k, k])
        mask = np.ones(expansion.shape[1])
        mask[k] = 0.0
        interference = abs_squared(cp.multiply(mask, gains[k, :]))
        constraints.append(2 * cp.real(gains[k, k] * e_k) - abs(e_k) ** 2
                           - thresholds[k] * interference - thresholds[k] >= 0)
    return constraints


def sinr_surrogate_values(gains: np.ndarray, expansion: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """Numeric value of the SINR surrogates (for tangency checks)."""
    K = len(thresholds)
    values = np.empty(K)
    for k in range(K):
        e_k = np.conj(expansion[k, k])
        interference = np.sum(np.abs(gains[k]) ** 2) - abs(gains[k, k]) ** 2
        values[k] = (2 * np.real(gains[k, k] * e_k) - abs(e_k) ** 2
                     - thresholds[k] * interference - thresholds[k])
    return values


# ---------------------------------------------------------------- step 1

def si_eigenvalue(ch: ChannelSet) -> float:
    """lambda_m: largest eigenvalue of diag{h_t} H_SI^H H_SI diag{h_t^*}."""
    D = ch.si_channel * np.conj(ch.target_channel)[None, :]
    return float(max(0.0, np.linalg.eigvalsh(D.conj().T @ D)[-1]))


def receive_count_objective(n_receive, lambda_m: float, target_gain: float, cfg: ScenarioConfig):
    """
    (beta^2 N sigma_r^2 + P lambda_m (N - N_r)) / (beta^6 sigma_t^2 P N_r^2 (N - N_r)^2).

    h_t and lambda_m carry the path gain, hence beta^6; the minimizer over N_r
    does not depend on the power of beta in the denominator.
    """
    N, P = cfg.n_antennas, cfg.power_budget
    n_receive = np.asarray(n_receive, dtype=float)
    beta2 = target_gain ** 2
    numerator = beta2 * N * cfg.noise_radar + P * lambda_m * (N - n_receive)
    return numerator / (beta2 ** 3 * cfg.rcs_variance * P * n_receive ** 2 * (N - n_receive) ** 2)


def receive_count_bound(n_receive, lambda_m: float, target_gain: float, cfg: ScenarioConfig):
    """Upper bound on sigma_theta^2 under the ideal sensing beamformer."""
    return RECEIVE_BOUND_CONSTANT * receive_count_objective(n_receive, lambda_m, target_gain, cfg)


def line_search_receive_count(lambda_m: float, target_gain: float, cfg: ScenarioConfig) -> int:
    """N_r* over the integer grid 1..N-K (ties to the smaller count)."""
    grid = np.arange(1, cfg.n_antennas - cfg.n_users + 1)
    return int(grid[np.argmin(receive_count_objective(grid, lambda_m, target_gain, cfg))])


def optimal_receive_count(ch: ChannelSet, cfg: ScenarioConfig, lambda_m: Optional[float] = None) -> int:
    """
    Receive-array size of the heuristic design.

    Args:
        ch: Channel realization (target gain and SI channel).
        cfg: Scenario constants.
        lambda_m: Optional override of the SI eigenvalue.

    Returns:
        N_r = N_r* - K clamped to [1, N - K].
    """
    if lambda_m is None:
        lambda_m = si_eigenvalue(ch)
    n_star = line_search_receive_count(lambda_m, ch.target_gain, cfg)
    n_receive = int(np.clip(n_star - cfg.n_users, 1, cfg.n_antennas - cfg.n_users))
    logger.debug(f"Receive count: line search {n_star}, corrected {n_receive} (lambda_m={lambda_m:.3e})")
    return n_receive


def ideal_sensing_beamformer(ch: ChannelSet, cfg: ScenarioConfig) -> Beamformer:
    """W with W W^H = P / (beta_t^2 N) h_t^* h_t^T, carried by the first radar column."""
    W = np.zeros((cfg.n_antennas, cfg.n_antennas + cfg.n_users), dtype=complex)
    W[:, cfg.n_users] = np.sqrt(cfg.power_budget / (ch.target_gain ** 2 * cfg.n_antennas)) * np.conj(ch.target_channel)
    return Beamformer(W, cfg.n_users)


# ---------------------------------------------------------------- step 2

def restricted_power_minimization(ch: ChannelSet, cfg: ScenarioConfig,
                                  transmit_indices: Optional[Sequence[int]] = None) -> Beamformer:
    """
    Minimum-power communication beamformer on a subset of antennas.

    Solved as an SOCP over the real embedding of W_c with an epigraph variable.

    Raises:
        InfeasibleDesignError: SINR targets cannot be met on the given antennas.
    """
    N, K = cfg.n_antennas, cfg.n_users
    active = np.arange(N) if transmit_indices is None else np.asarray(transmit_indices, dtype=int)
    S = active.size
    H = whitened_users(ch, cfg)[:, active]
    n_real = 2 * S * K

    cones = [SecondOrderCone(np.hstack([np.eye(n_real), np.zeros((n_real, 1))]), np.zeros(n_real),
                             np.eye(n_real + 1)[-1], 0.0, name="power")]
    eq_rows = []
    for k in range(K):
        R = complex_matrix_to_real(np.kron(np.eye(K), H[k][None, :]))
        re_rows, im_rows = R[:K], R[K:]
        others = [j for j in range(K) if j != k]
        A = np.vstack([re_rows[others], im_rows[others], np.zeros((1, n_real))])
        b = np.zeros(A.shape[0])
        b[-1] = 1.0
        c = np.append(re_rows[k] / np.sqrt(cfg.sinr_thresholds[k]), 0.0)
        cones.append(SecondOrderCone(np.hstack([A, np.zeros((A.shape[0], 1))]), b, c, 0.0, name=f"sinr_{k}"))
        eq_rows.append(np.append(im_rows[k], 0.0))

    problem = SocpProblem(np.eye(n_real + 1)[-1], cones, np.array(eq_rows), np.zeros(K))
    report = solve_socp(problem, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    if not report.usable:
        raise InfeasibleDesignError(
            f"SINR targets unattainable on {S} antennas (status {report.status})")

    W_c = real_to_complex(report.x[:-1]).reshape(K, S).T
    W = np.zeros((N, N + K), dtype=complex)
    W[active, :K] = W_c
    return Beamformer(W, K)


def comm_power_minimization(ch: ChannelSet, cfg: ScenarioConfig) -> Beamformer:
    """Full-array minimum-power beamformer W~ meeting every SINR target."""
    return restricted_power_minimization(ch, cfg)


def partition_by_power(W_tilde, n_transmit: int, n_users: int) -> Partition:
    """Transmit set = the N_t rows of W~ with the largest power (ties to the lower index)."""
    W = W_tilde.W if isinstance(W_tilde, Beamformer) else np.asarray(W_tilde)
    powers = np.sum(np.abs(W) ** 2, axis=1)
    order = np.argsort(-powers, kind="stable")
    return Partition.from_transmit_indices(order[:n_transmit], W.shape[0], n_users)


# ---------------------------------------------------------------- step 3

def echo_matrix(partition: Partition, ch: ChannelSet) -> np.ndarray:
    """T = (I - A) h_t h_t^T A."""
    return np.outer(partition.b * ch.target_channel, partition.a * ch.target_channel)


def gamma_update(W, a, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """gamma = ||(I-A) h_t h_t^T A W||^2 / (sigma_r^2 N_r + ||(I-A) H_SI A W||^2)."""
    W = W.W if isinstance(W, Beamformer) else np.asarray(W)
    a = a.a if isinstance(a, Partition) else np.asarray(a, dtype=float)
    b = 1 - a
    AW = a[:, None] * W
    echo = np.linalg.norm(np.outer(b * ch.target_channel, ch.target_channel @ AW)) ** 2
    leakage = np.linalg.norm((b[:, None] * ch.si_channel) @ AW) ** 2
    return float(echo / (cfg.noise_radar * b.sum() + leakage))


def heuristic_objective(W, partition: Partition, gamma: float, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """||T W||^2 - gamma (sigma_r^2 N_r + ||(I-A) H_SI A W||^2); zero when gamma is the ratio at W."""
    W = W.W if isinstance(W, Beamformer) else np.asarray(W)
    AW = partition.a[:, None] * W
    leakage = (partition.b[:, None] * ch.si_channel) @ AW
    return float(np.linalg.norm(echo_matrix(partition, ch) @ W) ** 2
                 - gamma * (cfg.noise_radar * partition.n_receive + np.linalg.norm(leakage) ** 2))


def echo_surrogate(W, W_m, partition: Partition, ch: ChannelSet) -> float:
    """2 Re tr{(W^m)^H T^H T W} - ||T W^m||^2, a minorant of ||T W||^2."""
    T = echo_matrix(partition, ch)
    W = W.W if isinstance(W, Beamformer) else np.asarray(W)
    W_m = W_m.W if isinstance(W_m, Beamformer) else np.asarray(W_m)
    T_m = W_m.conj().T @ T.conj().T @ T
    return float(2 * np.real(np.trace(T_m @ W)) - np.linalg.norm(T @ W_m) ** 2)


def solve_w_heuristic(state: Alg2State, ch: ChannelSet, cfg: ScenarioConfig) -> Beamformer:
    """
    One MM step on the Dinkelbach objective for the fixed partition.

    Only the transmit rows of W are variables; echo terms are normalized by beta_t^4
    and the users are whitened.

    Raises:
        InfeasibleDesignError: the convexified problem has no solution.
    """
    partition = state.partition
    tx, rx = partition.transmit_indices, partition.receive_indices
    K = cfg.n_users
    beta4 = ch.target_gain ** 4
    steering = ch.target_channel[tx] / ch.target_gain
    W_m = state.W.W[tx]

    W_tx = cp.Variable(W_m.shape, complex=True)
    projection = steering @ W_tx
    projection_m = steering @ W_m
    # ||T W||^2 / beta^4 = N_r ||h(theta_t)_tx^T W_tx||^2
    echo = partition.n_receive * (2 * cp.real(projection @ np.conj(projection_m))
                                  - np.linalg.norm(projection_m) ** 2)
    leakage = abs_squared(ch.si_channel[np.ix_(rx, tx)] @ W_tx)
    objective = cp.Maximize(echo - (state.gamma / beta4) * leakage)

    H = whitened_users(ch, cfg)[:, tx]
    constraints = sinr_surrogate_constraints(H @ W_tx, H @ W_m, cfg.sinr_thresholds[:K])
    constraints.append(abs_squared(W_tx) <= cfg.power_budget)

    report = solve_model(cp.Problem(objective, constraints), tol=cfg.solver_tol,
                         max_iter=cfg.solver_max_iter, label="heuristic W-update")
    if W_tx.value is None or not report.usable:
        raise InfeasibleDesignError(f"beamformer update failed (status {report.status})")

    W = np.zeros_like(state.W.W)
    W[tx] = W_tx.value
    return Beamformer(W, K)


def initial_beamformer(partition: Partition, ch: ChannelSet, cfg: ScenarioConfig,
                       W_tilde: Optional[Beamformer] = None) -> Beamformer:
    """
    Feasible starting point: W~ masked to the transmit set, else the power-minimizing
    beamformer restricted to it. Radar columns start at zero.
    """
    if W_tilde is not None:
        masked = W_tilde.masked(partition)
        sinrs = comm_sinrs(masked, partition, ch, cfg)
        if (np.all(sinrs >= np.asarray(cfg.sinr_thresholds) * (1 - SINR_REL_TOL))
                and masked.transmit_power(partition.a) <= cfg.power_budget):
            return masked
        logger.debug("Masked power-min beamformer breaks SINR feasibility; re-solving on the transmit set")

    W0 = restricted_power_minimization(ch, cfg, partition.transmit_indices)
    if W0.transmit_power(partition.a) > cfg.power_budget * (1 + SINR_REL_TOL):
        raise InfeasibleDesignError(
            f"SINR targets need {W0.transmit_power(partition.a):.3f} W on {partition.n_transmit} antennas, "
            f"budget is {cfg.power_budget:.3f} W")
    return W0


def optimize_beamformer(partition: Partition, ch: ChannelSet, cfg: ScenarioConfig,
                        W_init: Beamformer, design: str = "alg2") -> DesignResult:
    """
    Alternate gamma updates and MM beamformer steps for a fixed partition.

    Convergence is declared when the ratio gamma changes by less than the relative
    tolerance; gamma is the true radar objective and never decreases.
    """
    state = Alg2State(partition=partition, W=W_init, lambda_m=si_eigenvalue(ch),
                      T=echo_matrix(partition, ch))
    state.gamma = gamma_update(state.W, partition, ch, cfg)
    state.gamma_trace.append(state.gamma)
    state.objective_trace.append(heuristic_objective(state.W, partition, state.gamma, ch, cfg))

    status, iteration = "max_iter", 0
    while iteration < cfg.max_iters:
        try:
            W_next = solve_w_heuristic(state, ch, cfg)
        except (InfeasibleDesignError, SolverError) as e:
            logger.warning(f"{design}: beamformer update stopped at iteration {iteration}: {e}")
            break

        objective = heuristic_objective(W_next, partition, state.gamma, ch, cfg)
        gamma = gamma_update(W_next, partition, ch, cfg)
        if gamma < state.gamma * (1 - 1e-6):
            logger.debug(f"{design}: ratio decreased {state.gamma:.6e} -> {gamma:.6e}")

        delta = abs(1 - gamma / state.gamma) if state.gamma > 0 else (0.0 if gamma == 0 else np.inf)
        state.W, state.gamma = W_next, gamma
        state.objective_trace.append(objective)
        state.gamma_trace.append(gamma)
        iteration += 1
        logger.debug(f"{design} iter {iteration}: f={objective:.6e} gamma={gamma:.6e} delta={delta:.3e}")
        if delta <= cfg.conv_tol:
            status = "converged"
            break

    objective = np.asarray(state.objective_trace)
    scale = np.max(np.abs(objective)) if np.any(objective) else 1.0
    trace = pd.DataFrame({
        "iter": np.arange(len(objective)),
        "objective": objective,
        "normalized_objective": objective / scale,
        "gamma": state.gamma_trace,
    })
    metrics = evaluate_design(partition, state.W, ch, cfg)
    return DesignResult(design, partition, state.W, metrics, status, iteration, trace)


@log_operation("Heuristic design")
def run_algorithm2(ch: ChannelSet, cfg: ScenarioConfig, partition_override: Optional[Partition] = None,
                   design: str = "alg2") -> DesignResult:
    """
    Heuristic array partitioning and transmit beamforming.

    Args:
        ch: Channel realization.
        cfg: Scenario constants.
        partition_override: Fixed partition; skips the receive-count search and the
            power-based selection (used by the joint design and the baselines).
        design: Label stored in the result.

    Returns:
        DesignResult with the partition, beamformer, metrics and iteration trace.

    Raises:
        InfeasibleDesignError: SINR targets cannot be met for the partition.
    """
    if partition_override is None:
        n_receive = optimal_receive_count(ch, cfg)
        W_tilde = comm_power_minimization(ch, cfg)
        partition = partition_by_power(W_tilde, cfg.n_antennas - n_receive, cfg.n_users)
        W_init = initial_beamformer(partition, ch, cfg, W_tilde)
    else:
        partition = partition_override
        W_init = initial_beamformer(partition, ch, cfg)

    result = optimize_beamformer(partition, ch, cfg, W_init, design)
    logger.debug(f"{design}: N_r={partition.n_receive}, status {result.status} after {result.iterations} iterations")
    return result
