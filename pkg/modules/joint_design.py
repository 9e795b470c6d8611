"""
Joint Design
SDR initialization and alternating Dinkelbach / ADMM / MM updates of the beamformer and the relaxed partition.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np
import pandas as pd

from error_handler import DegenerateGeometryError, ISACError, InfeasibleDesignError, SolverError, log_operation
from modules.array_model import Beamformer, ChannelSet, Partition
from modules.convex_kernel import (PsdCombination, QcqpProblem, QuadraticConstraint, SdpProblem, SolveReport,
                                   TraceConstraint, solve_model, solve_qcqp, solve_sdp)
from modules.heuristic_design import abs_squared, run_algorithm2, sinr_surrogate_constraints, whitened_users
from modules.metrics import (BeamwidthModel, DesignResult, delta_broadening, dinkelbach_targets, echo_projection,
                             radar_sinr_exact, radar_sinr_lower_bound, rmse_model)
from scenario_settings import ScenarioConfig

logger = logging.getLogger(__name__)

T1_FLOOR = 1e-12
MAX_BLOCK_FAILURES = 3
ZERO_ROW = 1e-9
# linearized echo power kept above this share of its current value in the a-update
ECHO_TRUST = 0.5
# c1 + c2 t1 kept above this share of c1 in the b-update
BEAMWIDTH_FLOOR = 0.05
ACCEPT_TOL = 1e-7
MOVE_TOL = 1e-9
DEPARTURE_TOL = 1e-3


@dataclass
class Alg1State:
    """Relaxed iterate of the joint design."""
    W: Beamformer
    a: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    t1: float
    t2: float
    rho1: float
    rho2: float
    iteration: int = 0
    objective_trace: List[float] = field(default_factory=list)

    @property
    def residual(self) -> np.ndarray:
        return self.a + self.b - 1

    def copy(self) -> "Alg1State":
        return Alg1State(self.W, self.a.copy(), self.b.copy(), self.mu.copy(), self.t1, self.t2,
                         self.rho1, self.rho2, self.iteration, list(self.objective_trace))


@dataclass
class SurrogateCache:
    """First-order expansion data at the current iterate."""
    d: np.ndarray
    e: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f1_tilde: np.ndarray
    f2_tilde: np.ndarray
    c1: float
    c2: float
    c1_tilde: float
    c2_tilde: float


@dataclass
class SdrInit:
    R: np.ndarray
    R_users: List[np.ndarray]
    w_users: np.ndarray
    W_r: np.ndarray
    report: SolveReport

    @property
    def beamformer(self) -> Beamformer:
        return Beamformer(np.hstack([self.w_users, self.W_r]), self.w_users.shape[1])


def linearize_quadratic(Q: np.ndarray, x_m: np.ndarray) -> Tuple[np.ndarray, float]:
    """Tangent of the convex x^T Q x at x_m: x^T Q x >= g^T x - c with (g, c) returned."""
    return 2 * Q @ x_m, float(x_m @ Q @ x_m)


def objective_value(state: Alg1State, model: BeamwidthModel) -> float:
    """f = (c1 + c2 t1) / sqrt(t2) + rho1 a^T (1 - a)."""
    return float((model.c1 + model.c2 * state.t1) / np.sqrt(state.t2)
                 + state.rho1 * state.a @ (1 - state.a))


def lagrangian_value(state: Alg1State, model: BeamwidthModel) -> float:
    return objective_value(state, model) + state.rho2 * float(
        np.sum((state.residual + state.mu / state.rho2) ** 2))


def build_cache(state: Alg1State, ch: ChannelSet, cfg: ScenarioConfig, model: BeamwidthModel) -> SurrogateCache:
    """Expansion data at (W, a, b, t1) of the current iterate."""
    d = echo_projection(state.W, state.a, ch)
    gains = whitened_users(ch, cfg) @ state.W.effective(state.a)
    e = np.conj(np.diag(gains[:, :cfg.n_users]))

    b_m, t1 = state.b, state.t1
    ones = np.ones((cfg.n_antennas, cfg.n_antennas))
    gram = model.real_gram
    return SurrogateCache(
        d=d,
        e=e,
        f1=2 * ones @ b_m + 2 * t1 * model.Q2 @ b_m,
        f2=4 * gram @ b_m + 2 * t1 * model.Q1 @ b_m,
        f1_tilde=2 * ones @ b_m - 2 * t1 * model.Q1 @ b_m,
        f2_tilde=4 * gram @ b_m - 2 * t1 * model.Q2 @ b_m,
        c1=float(b_m.sum() ** 2 + t1 * b_m @ model.Q2 @ b_m),
        c2=float(2 * b_m @ gram @ b_m + t1 * b_m @ model.Q1 @ b_m),
        c1_tilde=float(b_m.sum() ** 2 - t1 * b_m @ model.Q1 @ b_m),
        c2_tilde=float(2 * b_m @ gram @ b_m - t1 * b_m @ model.Q2 @ b_m),
    )


# ---------------------------------------------------------------- initialization

def sdr_beamformer(ch: ChannelSet, cfg: ScenarioConfig, a: np.ndarray) -> SdrInit:
    """
    Echo-power maximizing beamformer from the semidefinite relaxation.

    Raises:
        InfeasibleDesignError: the relaxation is infeasible.
    """
    N, K = cfg.n_antennas, cfg.n_users
    u = ch.target_channel * a
    objective = np.outer(np.conj(u), u) / ch.target_gain ** 2
    H = whitened_users(ch, cfg)

    constraints = []
    for k in range(K):
        g = np.conj(H[k]) * a
        B = np.outer(g, np.conj(g))
        gamma = cfg.sinr_thresholds[k]
        constraints.append(TraceConstraint({0: -B, k + 1: (1 + 1 / gamma) * B}, ">=", 1.0, name=f"sinr_{k}"))
    constraints.append(TraceConstraint({0: np.diag(a ** 2).astype(complex)}, "<=", cfg.power_budget, name="power"))

    combination = PsdCombination({0: 1.0, **{k + 1: -1.0 for k in range(K)}})
    problem = SdpProblem([N] * (K + 1), {0: objective}, "max", constraints, [combination])
    report = solve_sdp(problem, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    if not report.usable:
        raise InfeasibleDesignError(f"SINR targets unattainable under the power budget (status {report.status})")

    R, R_users = report.x[0], report.x[1:]
    w_users = np.zeros((N, K), dtype=complex)
    for k, R_k in enumerate(R_users):
        v = np.conj(H[k]) * a
        gain = np.real(np.conj(v) @ R_k @ v)
        if gain <= 0:
            raise InfeasibleDesignError(f"relaxation left user {k} without signal power")
        w_users[:, k] = R_k @ v / np.sqrt(gain)

    remainder = R - w_users @ w_users.conj().T
    eigvals, eigvecs = np.linalg.eigh((remainder + remainder.conj().T) / 2)
    W_r = eigvecs * np.sqrt(np.clip(eigvals, 0, None))[None, :]
    return SdrInit(R, list(R_users), w_users, W_r, report)


def sdr_initialize(ch: ChannelSet, cfg: ScenarioConfig,
                   model: Optional[BeamwidthModel] = None) -> Tuple[Beamformer, Alg1State]:
    """Initial beamformer and state at a = b = 0.5 with penalties set to the initial objective."""
    model = model or BeamwidthModel.build(cfg.target_angle, cfg.n_antennas)
    N = cfg.n_antennas
    a = np.full(N, 0.5)
    b = np.full(N, 0.5)
    W = sdr_beamformer(ch, cfg, a).beamformer

    t1, t2 = dinkelbach_targets(W, a, b, ch, cfg, model)
    f0 = (model.c1 + model.c2 * t1) / np.sqrt(t2)
    rho = max(abs(f0), 1e-12)
    state = Alg1State(W, a, b, np.zeros(N), t1, t2, rho, rho)
    state.objective_trace.append(objective_value(state, model))
    logger.debug(f"SDR init: t1={t1:.4e} t2={t2:.4e} rho={rho:.4e}")
    return W, state


# ---------------------------------------------------------------- W block

def radar_true_value(W, a: np.ndarray, ch: ChannelSet, cfg: ScenarioConfig, t2: float) -> float:
    """||W^H diag{h_t^*} a||^2 / beta^2 - t2 (sigma_r^2 + ||H_SI A W||^2) / (sigma_t^2 beta^4)."""
    W = W.W if isinstance(W, Beamformer) else np.asarray(W)
    beta2 = ch.target_gain ** 2
    d = echo_projection(W, a, ch)
    leakage = np.linalg.norm(ch.si_channel @ (a[:, None] * W)) ** 2
    return float(np.linalg.norm(d) ** 2 / beta2
                 - t2 * (cfg.noise_radar + leakage) / (cfg.rcs_variance * beta2 ** 2))


def radar_surrogate_value(W, a: np.ndarray, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig,
                          t2: float) -> float:
    """Minorant of radar_true_value, tight where cache.d was taken."""
    W = W.W if isinstance(W, Beamformer) else np.asarray(W)
    beta = ch.target_gain
    steering = ch.target_channel / beta
    d_bar = cache.d / beta
    leakage = np.linalg.norm(ch.si_channel @ (a[:, None] * W)) ** 2
    linear = 2 * np.real((a * steering) @ W @ d_bar) - np.linalg.norm(d_bar) ** 2
    return float(linear - t2 * (cfg.noise_radar + leakage) / (cfg.rcs_variance * beta ** 4))


def solve_w_subproblem(state: Alg1State, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig) -> Beamformer:
    """
    MM step on the radar constraint left-hand side, subject to linearized SINR and power.

    Raises:
        InfeasibleDesignError: the convexified problem has no solution.
    """
    N, K = cfg.n_antennas, cfg.n_users
    a = state.a
    beta = ch.target_gain
    A = np.diag(a)
    steering = ch.target_channel / beta

    W = cp.Variable((N, N + K), complex=True)
    AW = A @ W
    echo = 2 * cp.real((a * steering) @ W @ (cache.d / beta))
    leakage = abs_squared(ch.si_channel @ AW)
    objective = cp.Maximize(echo - state.t2 / (cfg.rcs_variance * beta ** 4) * leakage)

    H = whitened_users(ch, cfg)
    constraints = sinr_surrogate_constraints(H @ AW, H @ state.W.effective(a), cfg.sinr_thresholds)
    constraints.append(abs_squared(AW) <= cfg.power_budget)

    report = solve_model(cp.Problem(objective, constraints), tol=cfg.solver_tol,
                         max_iter=cfg.solver_max_iter, label="joint W-update")
    if W.value is None or not report.usable:
        raise InfeasibleDesignError(f"W-update failed (status {report.status})")

    W_new = np.array(W.value)
    W_new[a < ZERO_ROW] = 0
    return Beamformer(W_new, K)


# ---------------------------------------------------------------- a block

def a_ratio_weight(state: Alg1State, ch: ChannelSet, cfg: ScenarioConfig, model: BeamwidthModel) -> float:
    """Weight (c1 + c2 t1)^+ / (2 rho2 sqrt(t2)) of the majorized radar ratio in the a-update."""
    t1, t2 = dinkelbach_targets(state.W, state.a, state.b, ch, cfg, model)
    return max(model.c1 + model.c2 * t1, 0.0) / (2 * state.rho2 * np.sqrt(t2))


def build_a_problem(state: Alg1State, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig,
                    model: BeamwidthModel, ratio_weight: Optional[float] = None) -> QcqpProblem:
    """
    Convexified a-update as a real QCQP.

    Scaled by rho2, the objective majorizes the augmented Lagrangian in a and touches
    it at the current a. The ratio (c1 + c2 t1) / sqrt(t2) is bounded with
    sqrt(uv) <= (u + v) / 2, where u is the relative leakage power and v the inverse
    relative echo power. The echo power enters through its tangent, kept above
    ECHO_TRUST of its current value, and rho1 a^T (1 - a) through its linearization.

    Args:
        ratio_weight: Override of a_ratio_weight; 0 leaves the proximal ADMM step.
    """
    N, K = cfg.n_antennas, cfg.n_users
    W = state.W.W
    a_m = state.a
    if ratio_weight is None:
        ratio_weight = a_ratio_weight(state, ch, cfg, model)

    echo_power = float(np.linalg.norm(cache.d) ** 2)
    if echo_power <= 0:
        raise InfeasibleDesignError("echo projection vanished at the current iterate")
    p = 2 * np.real(ch.target_channel * (W @ cache.d)) / echo_power
    leakage = np.real((ch.si_channel.conj().T @ ch.si_channel) * (W @ W.conj().T).T)
    D_m = cfg.noise_radar + float(a_m @ leakage @ a_m)
    kappa = 1.0 / ECHO_TRUST

    c = 1 - state.b - state.mu / state.rho2
    penalty = state.rho1 / state.rho2
    P0 = np.eye(N) + ratio_weight * (leakage / D_m + kappa * np.outer(p, p))
    q0 = penalty * (1 - 2 * a_m) - 2 * c - ratio_weight * (1 + 4 * kappa) * p
    r0 = (ratio_weight * (cfg.noise_radar / D_m + 3 + 4 * kappa)
          + float(c @ c) + penalty * float(a_m @ a_m))

    # p^T a = 2 at the current point
    constraints = [QuadraticConstraint(q=-p, r=1 + ECHO_TRUST, name="echo_trust")]

    H = whitened_users(ch, cfg)
    for k in range(K):
        coupling = H[k][:, None] * W
        interference = np.zeros((N, N))
        for j in range(W.shape[1]):
            if j != k:
                interference += np.real(np.outer(coupling[:, j], np.conj(coupling[:, j])))
        gamma = cfg.sinr_thresholds[k]
        constraints.append(QuadraticConstraint(
            q=-2 * np.real(coupling[:, k] * cache.e[k]),
            r=abs(cache.e[k]) ** 2 + gamma,
            P=gamma * interference, name=f"sinr_{k}"))

    constraints.append(QuadraticConstraint(q=np.zeros(N), r=-cfg.power_budget,
                                           P=np.diag(np.sum(np.abs(W) ** 2, axis=1)), name="power"))
    constraints.append(QuadraticConstraint(q=np.ones(N), r=-(N - 1.0), name="max_transmit"))
    constraints.append(QuadraticConstraint(q=-np.ones(N), r=float(K), name="min_transmit"))
    return QcqpProblem(P0, q0, r0, constraints, lb=np.zeros(N), ub=np.ones(N))


def solve_a_subproblem(state: Alg1State, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig,
                       model: BeamwidthModel) -> np.ndarray:
    report = solve_qcqp(build_a_problem(state, cache, ch, cfg, model), tol=cfg.solver_tol,
                        max_iter=cfg.solver_max_iter, x0=state.a)
    if not report.usable:
        raise InfeasibleDesignError(f"a-update failed (status {report.status})")
    return np.clip(report.x, 0.0, 1.0)


# ---------------------------------------------------------------- b block

def _dc_bound(convex: np.ndarray, concave: np.ndarray, x_m: np.ndarray, name: str,
              offset: float = 0.0) -> QuadraticConstraint:
    """x^T convex x - x^T concave x + offset <= 0 with the subtracted term replaced by its tangent at x_m."""
    g, c = linearize_quadratic(concave, x_m)
    return QuadraticConstraint(q=-g, r=c + offset, P=convex, name=name)


def b_ratio_weight(state: Alg1State, ch: ChannelSet, cfg: ScenarioConfig, model: BeamwidthModel) -> float:
    """c2 / (rho2 sqrt(t2) |b^T (Q2 - Q1) b|) at the current iterate."""
    _, denominator = model.broadening_terms(state.b)
    if model.is_degenerate(denominator, state.b):
        raise DegenerateGeometryError(f"broadening denominator {denominator:.3e} is numerically zero")
    t2 = radar_sinr_lower_bound(state.W, state.a, ch, cfg)
    if t2 <= 0:
        raise InfeasibleDesignError("radar SINR lower bound is not positive")
    return model.c2 / (state.rho2 * np.sqrt(t2) * abs(denominator))


def b_branch_problems(state: Alg1State, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig,
                      model: BeamwidthModel, ratio_weight: Optional[float] = None) -> Dict[str, QcqpProblem]:
    """
    The two convexified b-updates, one per sign of b^T (Q2 - Q1) b (t1 = 0 counts as positive).

    The branch holding the current point also carries the ratio surrogate in its
    objective, weighted by ratio_weight, and caps |b^T (Q2 - Q1) b| at its current
    value. Together with the ratio constraint this bounds the change of
    c2 t1 / (rho2 sqrt(t2)) by the weighted surrogate. Both branches keep
    c1 + c2 t1 >= BEAMWIDTH_FLOOR * c1.
    """
    N, K = cfg.n_antennas, cfg.n_users
    b_m = state.b
    t1 = state.t1 if state.t1 != 0 else T1_FLOOR
    Q1, Q2 = model.Q1, model.Q2
    gram = model.real_gram
    ones = np.ones((N, N))
    eta = 1e-9 * max(1.0, float(b_m @ (Q1 + Q2) @ b_m))
    floor = (1 - BEAMWIDTH_FLOOR) * model.c1 / model.c2
    _, den_m = model.broadening_terms(b_m)
    if ratio_weight is None:
        ratio_weight = b_ratio_weight(state, ch, cfg, model)

    if t1 > 0:
        ratio_pos = QuadraticConstraint(q=-cache.f1, r=cache.c1, P=2 * gram + t1 * Q1, name="ratio")
        ratio_neg = QuadraticConstraint(q=-cache.f2, r=cache.c2, P=ones + t1 * Q2, name="ratio")
    else:
        ratio_pos = QuadraticConstraint(q=-cache.f1_tilde, r=cache.c1_tilde, P=2 * gram - t1 * Q2, name="ratio")
        ratio_neg = QuadraticConstraint(q=-cache.f2_tilde, r=cache.c2_tilde, P=ones - t1 * Q1, name="ratio")

    branches = {
        "positive": [_dc_bound(Q1, Q2, b_m, "denominator_positive", eta), ratio_pos,
                     _dc_bound(ones + floor * Q1, 2 * gram + floor * Q2, b_m, "beamwidth_floor")],
        "negative": [_dc_bound(Q2, Q1, b_m, "denominator_negative", eta), ratio_neg,
                     _dc_bound(2 * gram + floor * Q2, ones + floor * Q1, b_m, "beamwidth_floor")],
    }
    if den_m > 0:
        current, ratio = "positive", ratio_pos
        branches[current].append(_dc_bound(Q2, Q1, b_m, "denominator_cap", -den_m))
    else:
        current, ratio = "negative", ratio_neg
        branches[current].append(_dc_bound(Q1, Q2, b_m, "denominator_cap", den_m))

    target = state.a - 1 + state.mu / state.rho2
    sums = [QuadraticConstraint(q=np.ones(N), r=-(N - float(K)), name="max_receive"),
            QuadraticConstraint(q=-np.ones(N), r=1.0, name="min_receive")]
    problems = {}
    for label, constraints in branches.items():
        P0, q0, r0 = np.eye(N), 2 * target, float(target @ target)
        if label == current and ratio_weight > 0:
            P0 = P0 + ratio_weight * ratio.P
            q0 = q0 + ratio_weight * ratio.q
            r0 = r0 + ratio_weight * ratio.r
        problems[label] = QcqpProblem(P0, q0, r0, constraints + sums, lb=np.zeros(N), ub=np.ones(N))
    return problems


def solve_b_subproblem(state: Alg1State, cache: SurrogateCache, ch: ChannelSet, cfg: ScenarioConfig,
                       model: BeamwidthModel, ratio_weight: Optional[float] = None) -> np.ndarray:
    """
    Solve both sign branches and keep the one with the smaller exact b-part of the Lagrangian,
    ratio_weight |den_m| t1(b) + ||a + b - 1 + mu / rho2||^2.

    Raises:
        InfeasibleDesignError: neither branch yields a usable point.
    """
    if ratio_weight is None:
        ratio_weight = b_ratio_weight(state, ch, cfg, model)
    _, den_m = model.broadening_terms(state.b)
    scale = ratio_weight * abs(den_m)
    t1_min = -(1 - BEAMWIDTH_FLOOR) * model.c1 / model.c2
    target = state.a - 1 + state.mu / state.rho2

    best, best_merit = None, np.inf
    for label, problem in b_branch_problems(state, cache, ch, cfg, model, ratio_weight).items():
        try:
            report = solve_qcqp(problem, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, x0=state.b)
        except SolverError as e:
            logger.debug(f"b-update branch {label} failed: {e}")
            continue
        if not report.usable:
            continue
        b = np.clip(report.x, 0.0, 1.0)
        numerator, denominator = model.broadening_terms(b)
        if model.is_degenerate(denominator, b):
            continue
        t1 = numerator / denominator
        if t1 < t1_min * (1 + 1e-6):
            continue
        merit = scale * t1 + float(np.sum((b + target) ** 2))
        if merit < best_merit:
            best, best_merit = b, merit
    if best is None:
        raise InfeasibleDesignError("both b-update branches are infeasible")
    return best


def update_dual(state: Alg1State) -> np.ndarray:
    """mu <- mu + rho2 (a + b - 1)."""
    return state.mu + state.rho2 * (state.a + state.b - 1)


# ---------------------------------------------------------------- relaxation

@dataclass
class RelaxedSolution:
    best: Alg1State
    last: Alg1State
    status: str
    iterations: int
    trace: pd.DataFrame


def lagrangian_at(W: Beamformer, a: np.ndarray, b: np.ndarray, state: Alg1State, ch: ChannelSet,
                  cfg: ScenarioConfig, model: BeamwidthModel) -> Tuple[float, float, float]:
    """(L, t1, t2) at a candidate point with the multipliers and penalties of state."""
    t1, t2 = dinkelbach_targets(W, a, b, ch, cfg, model)
    f = (model.c1 + model.c2 * t1) / np.sqrt(t2) + state.rho1 * float(a @ (1 - a))
    return float(f + state.rho2 * np.sum((a + b - 1 + state.mu / state.rho2) ** 2)), t1, t2


def _step(block: str, state: Alg1State, W: Beamformer, a: np.ndarray, b: np.ndarray) -> float:
    if block == "W":
        return float(np.linalg.norm(W.W - state.W.W) / max(np.linalg.norm(state.W.W), ZERO_ROW))
    if block == "a":
        return float(np.max(np.abs(a - state.a)))
    return float(np.max(np.abs(b - state.b)))


def primal_sweep(state: Alg1State, ch: ChannelSet, cfg: ScenarioConfig,
                 model: BeamwidthModel) -> Tuple[bool, bool]:
    """
    One pass over the W, a and b blocks.

    A block update is kept only when it does not raise the augmented Lagrangian
    (within ACCEPT_TOL); t1 and t2 follow every kept update.

    Returns:
        (failed, moved): a block raised / some kept update changed its block.
    """
    failed = moved = False
    current = lagrangian_value(state, model)
    for block in ("W", "a", "b"):
        W, a, b = state.W, state.a, state.b
        try:
            cache = build_cache(state, ch, cfg, model)
            if block == "W":
                W = solve_w_subproblem(state, cache, ch, cfg)
            elif block == "a":
                a = solve_a_subproblem(state, cache, ch, cfg, model)
            else:
                b = solve_b_subproblem(state, cache, ch, cfg, model)
            value, t1, t2 = lagrangian_at(W, a, b, state, ch, cfg, model)
        except ISACError as e:
            failed = True
            logger.debug(f"Iteration {state.iteration}: {block}-update kept previous iterate ({e})")
            continue

        if value > current + ACCEPT_TOL * max(1.0, abs(current)):
            logger.debug(f"Iteration {state.iteration}: {block}-update rejected "
                         f"(L {current:.6e} -> {value:.6e})")
            continue
        moved = moved or _step(block, state, W, a, b) > MOVE_TOL
        state.W, state.a, state.b, state.t1, state.t2 = W, a, b, t1, t2
        current = value
    return failed, moved


def relax_partition(ch: ChannelSet, cfg: ScenarioConfig, model: BeamwidthModel) -> RelaxedSolution:
    """
    Alternating block updates with dual ascent on a + b = 1, from the SDR start.

    Converged means the relative change of f fell below conv_tol with
    ||a + b - 1||_inf <= sqrt(conv_tol) after a left the uniform start. Three
    consecutive sweeps that fail or move nothing stop the loop with status max_iter.
    The best iterate is the lowest f among those meeting the residual tolerance.
    """
    _, state = sdr_initialize(ch, cfg, model)
    rows = [_trace_row(state, model)]
    residual_tol = np.sqrt(cfg.conv_tol)
    best, best_f = None, np.inf
    status, failures = "max_iter", 0
    f_prev = state.objective_trace[-1]

    while state.iteration < cfg.max_iters:
        failed, moved = primal_sweep(state, ch, cfg, model)
        state.mu = update_dual(state)
        state.iteration += 1

        f = objective_value(state, model)
        state.objective_trace.append(f)
        rows.append(_trace_row(state, model))
        residual = float(np.max(np.abs(state.residual)))
        if residual <= residual_tol and f < best_f:
            best, best_f = state.copy(), f

        delta = abs(1 - f / f_prev) if f_prev != 0 else np.inf
        f_prev = f
        departed = float(np.max(np.abs(state.a - 0.5))) > DEPARTURE_TOL
        logger.debug(f"Iteration {state.iteration}: f={f:.6e} delta={delta:.3e} residual={residual:.3e}")
        if delta <= cfg.conv_tol and residual <= residual_tol and departed and not failed:
            status = "converged"
            best = state.copy()
            break

        failures = failures + 1 if failed or not moved else 0
        if failures >= MAX_BLOCK_FAILURES:
            logger.warning(f"Joint design: {failures} consecutive sweeps failed or stalled, keeping best iterate")
            break

    return RelaxedSolution(best or state.copy(), state, status, state.iteration, pd.DataFrame(rows))


# ---------------------------------------------------------------- rounding

def round_partition(a: np.ndarray, n_users: int) -> Partition:
    """floor(a + 1/2), then N_t clamped to [K, N-1] by the relaxed values."""
    a = np.asarray(a, dtype=float)
    binary = np.floor(a + 0.5).astype(int)
    N = a.size
    order = np.argsort(-a, kind="stable")
    while binary.sum() < n_users:
        binary[next(i for i in order if binary[i] == 0)] = 1
    while binary.sum() > N - 1:
        binary[next(i for i in order[::-1] if binary[i] == 1)] = 0
    return Partition(binary, n_users)


def threshold_partitions(relaxed: Alg1State, n_users: int) -> List[Partition]:
    """For every N_t in [K, N-1], transmit on the N_t antennas with the largest a - b."""
    N = relaxed.a.size
    order = np.argsort(-(relaxed.a - relaxed.b), kind="stable")
    return [Partition.from_transmit_indices(order[:n], N, n_users) for n in range(n_users, N)]


def screening_rmse(partition: Partition, relaxed: Alg1State, ch: ChannelSet, cfg: ScenarioConfig,
                   model: BeamwidthModel) -> float:
    """Model RMSE of a partition under the relaxed beamformer cut to its transmit rows at full power."""
    W = relaxed.W.effective(relaxed.a) * partition.a[:, None]
    power = float(np.linalg.norm(W) ** 2)
    if power <= 0:
        return np.inf
    W = W * np.sqrt(cfg.power_budget / power)
    try:
        delta = delta_broadening(partition.b, model)
    except DegenerateGeometryError:
        return np.inf
    sinr = radar_sinr_exact(W, partition, ch, cfg)
    if sinr <= 0:
        return np.inf
    return _positive(rmse_model(delta, sinr, cfg.n_antennas))


def _positive(value: float) -> float:
    return value if np.isfinite(value) and value > 0 else np.inf


def restoration_order(partition: Partition, a: np.ndarray, W: Beamformer) -> np.ndarray:
    """Receive antennas sorted by relaxed effective row power a_n^2 ||W(n,:)||^2 (ties to lower index)."""
    power = np.asarray(a) ** 2 * np.sum(np.abs(W.W) ** 2, axis=1)
    receive = partition.receive_indices
    return receive[np.argsort(power[receive], kind="stable")]


def redesign(partition: Partition, relaxed: Alg1State, ch: ChannelSet, cfg: ScenarioConfig) -> DesignResult:
    """
    Beamformer stage for the rounded partition, moving the least-power receive
    antenna to transmit (up to K times) while the SINR targets are unattainable.
    """
    for attempt in range(cfg.n_users + 1):
        try:
            return run_algorithm2(ch, cfg, partition_override=partition, design="alg1")
        except InfeasibleDesignError as e:
            if attempt == cfg.n_users or partition.n_transmit >= cfg.n_antennas - 1:
                raise InfeasibleDesignError(f"rounded partition unrestorable: {e}") from e
            flip = restoration_order(partition, relaxed.a, relaxed.W)[0]
            logger.debug(f"Restoration: antenna {flip} moved to transmit")
            partition = Partition.from_transmit_indices(
                np.append(partition.transmit_indices, flip), cfg.n_antennas, cfg.n_users)
    raise InfeasibleDesignError("rounded partition unrestorable")


def select_partition(relaxed: Alg1State, ch: ChannelSet, cfg: ScenarioConfig,
                     model: BeamwidthModel) -> DesignResult:
    """
    Binary design from the relaxed iterate.

    The rounded partition (with restoration) competes with the rounding_candidates
    threshold partitions of lowest screening_rmse; each gets its own beamformer
    and the lowest model RMSE wins, ties to the rounded partition.

    Raises:
        InfeasibleDesignError: no candidate admits the SINR targets.
    """
    rounded = round_partition(relaxed.a, cfg.n_users)
    designs, seen = [], {tuple(rounded.a.tolist())}
    try:
        designs.append(redesign(rounded, relaxed, ch, cfg))
        seen.add(tuple(designs[0].partition.a.tolist()))
    except InfeasibleDesignError as e:
        logger.debug(f"Rounded partition dropped: {e}")

    screened = sorted(
        (screening_rmse(p, relaxed, ch, cfg, model), i, p)
        for i, p in enumerate(threshold_partitions(relaxed, cfg.n_users)) if tuple(p.a.tolist()) not in seen)
    for score, _, partition in screened[:cfg.rounding_candidates]:
        if not np.isfinite(score):
            break
        try:
            designs.append(run_algorithm2(ch, cfg, partition_override=partition, design="alg1"))
        except InfeasibleDesignError as e:
            logger.debug(f"Threshold partition N_t={partition.n_transmit} dropped: {e}")

    if not designs:
        raise InfeasibleDesignError("no rounded partition admits the SINR targets")
    return min(designs, key=lambda d: _positive(d.metrics.rmse_model))


# ---------------------------------------------------------------- driver

@log_operation("Joint design")
def run_algorithm1(ch: ChannelSet, cfg: ScenarioConfig) -> DesignResult:
    """
    Joint array partitioning and transmit beamforming.

    Args:
        ch: Channel realization.
        cfg: Scenario constants (max_iters and conv_tol drive the relaxation,
            rounding_candidates the selection stage).

    Returns:
        DesignResult with the selected partition, its beamformer and the relaxed
        iteration trace (iter, f, lagrangian, primal_residual, t1, t2).

    Raises:
        InfeasibleDesignError: initialization or every candidate redesign is infeasible.
    """
    model = BeamwidthModel.build(cfg.target_angle, cfg.n_antennas)
    relaxed = relax_partition(ch, cfg, model)
    result = select_partition(relaxed.best, ch, cfg, model)
    result.status = relaxed.status
    result.iterations = relaxed.iterations
    result.trace = relaxed.trace
    logger.debug(f"alg1: N_r={result.partition.n_receive} status {relaxed.status} "
                 f"after {relaxed.iterations} iterations")
    return result


def _trace_row(state: Alg1State, model: BeamwidthModel) -> Dict[str, float]:
    return {
        "iter": state.iteration,
        "f": objective_value(state, model),
        "lagrangian": lagrangian_value(state, model),
        "primal_residual": float(np.linalg.norm(state.residual)),
        "t1": state.t1,
        "t2": state.t2,
    }
