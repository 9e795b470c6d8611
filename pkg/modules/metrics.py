"""
Performance Metrics
Communication SINR, radar SINR (exact and lower bound), beamwidth broadening and the DOA RMSE model.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from error_handler import DegenerateGeometryError, InfeasibleDesignError, InvalidPartitionError
from modules.array_model import Beamformer, ChannelSet, Partition, centered_positions, steering_vector
from scenario_settings import ScenarioConfig

logger = logging.getLogger(__name__)

NOMINAL_BEAMWIDTH = 1.772
RMSE_SCALE = 1.6 * np.sqrt(2.0)
RMSE_INTERCEPT = NOMINAL_BEAMWIDTH / RMSE_SCALE   # 0.7831
RMSE_SLOPE = 2.0 / RMSE_SCALE                     # 0.8839
RATIO_COEFFICIENT = 1.0 / RMSE_SCALE              # 0.4419
DEGENERATE_DENOMINATOR = 1e-12


def _indicator(a) -> np.ndarray:
    if isinstance(a, Partition):
        return a.a.astype(float)
    return np.asarray(a, dtype=float)


def _matrix(W) -> np.ndarray:
    return W.W if isinstance(W, Beamformer) else np.asarray(W, dtype=complex)


@dataclass(frozen=True)
class BeamwidthModel:
    """First-order model of the receive 3dB beamwidth broadening for a target at theta_t."""
    target_angle: float
    n_antennas: int
    theta_0: float
    q: np.ndarray
    h: np.ndarray
    Q0: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    ridge: float

    @classmethod
    def build(cls, target_angle: float, n_antennas: int) -> "BeamwidthModel":
        theta_0 = target_angle + NOMINAL_BEAMWIDTH / (2 * n_antennas)
        q = centered_positions(n_antennas)
        h = steering_vector(theta_0, n_antennas) * np.conj(steering_vector(target_angle, n_antennas))

        cross = np.outer(np.conj(h), h * q)
        Q0 = -np.pi * np.cos(theta_0) * np.imag(cross + cross.T)
        Q0 = (Q0 + Q0.T) / 2

        eigvals, eigvecs = np.linalg.eigh(Q0)
        spectral_norm = np.max(np.abs(eigvals))
        ridge = 1e-8 * spectral_norm if spectral_norm > 0 else 1e-8
        positive = eigvals > 0
        Q2 = (eigvecs[:, positive] * eigvals[positive]) @ eigvecs[:, positive].T + ridge * np.eye(n_antennas)
        Q1 = (eigvecs[:, ~positive] * -eigvals[~positive]) @ eigvecs[:, ~positive].T + ridge * np.eye(n_antennas)

        return cls(target_angle, n_antennas, theta_0, q, h, Q0, Q1, Q2, ridge)

    @property
    def c1(self) -> float:
        return RMSE_INTERCEPT / self.n_antennas

    @property
    def c2(self) -> float:
        return RATIO_COEFFICIENT

    @property
    def real_gram(self) -> np.ndarray:
        """Re{h h^H}, so that |b^T h|^2 = b^T Re{h h^H} b for real b."""
        return np.real(np.outer(self.h, np.conj(self.h)))

    def broadening_terms(self, b: np.ndarray) -> Tuple[float, float]:
        """(2|b^T h|^2 - |b^T 1|^2, b^T (Q2 - Q1) b)."""
        b = np.asarray(b, dtype=float)
        numerator = 2 * abs(b @ self.h) ** 2 - b.sum() ** 2
        denominator = float(b @ (self.Q2 - self.Q1) @ b)
        return float(numerator), denominator

    def is_degenerate(self, denominator: float, b: np.ndarray) -> bool:
        scale = max(1.0, np.abs(self.Q0).max() * float(np.dot(b, b)))
        return abs(denominator) <= DEGENERATE_DENOMINATOR * scale


@dataclass(frozen=True)
class MetricReport:
    sinr_comm: np.ndarray
    sinr_radar_exact: float
    sinr_radar_lb: float
    delta: float
    beamwidth_3db: float
    rmse_model: float

    def meets_sinr(self, thresholds, rel_tol: float = 1e-6) -> bool:
        return bool(np.all(self.sinr_comm >= np.asarray(thresholds) * (1 - rel_tol)))


@dataclass
class DesignResult:
    """Outcome of any design procedure."""
    design: str
    partition: Partition
    beamformer: Beamformer
    metrics: MetricReport
    status: str
    iterations: int
    trace: pd.DataFrame = field(default_factory=pd.DataFrame)


def comm_sinr(k: int, W, a, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """SINR of user k: |h_k^T A w_k|^2 / (sum_{j != k} |h_k^T A w_j|^2 + sigma_k^2)."""
    gains = ch.user_channels[k] @ (_indicator(a)[:, None] * _matrix(W))
    power = np.abs(gains) ** 2
    return float(power[k] / (power.sum() - power[k] + cfg.noise_user))


def comm_sinrs(W, a, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    gains = np.abs(ch.user_channels @ (_indicator(a)[:, None] * _matrix(W))) ** 2
    signal = np.diag(gains[:, :ch.n_users])
    return signal / (gains.sum(axis=1) - signal + cfg.noise_user)


def radar_sinr_exact(W, a, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """sigma_t^2 ||(I-A) h_t h_t^T A W||^2 / (sigma_r^2 N_r + ||(I-A) H_SI A W||^2)."""
    a = _indicator(a)
    b = 1 - a
    n_receive = b.sum()
    if n_receive <= 0:
        raise InvalidPartitionError("radar SINR needs at least one receive antenna")
    AW = a[:, None] * _matrix(W)
    echo = np.outer(b * ch.target_channel, ch.target_channel @ AW)
    leakage = (b[:, None] * ch.si_channel) @ AW
    return float(cfg.rcs_variance * np.linalg.norm(echo) ** 2
                 / (cfg.noise_radar * n_receive + np.linalg.norm(leakage) ** 2))


def echo_projection(W, a, ch: ChannelSet) -> np.ndarray:
    """W^H diag{h_t^*} a."""
    return _matrix(W).conj().T @ (np.conj(ch.target_channel) * _indicator(a))


def radar_sinr_lower_bound(W, a, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """sigma_t^2 beta_t^2 a^T diag{h_t} W W^H diag{h_t^*} a / (sigma_r^2 + ||H_SI A W||^2)."""
    a = _indicator(a)
    AW = a[:, None] * _matrix(W)
    numerator = cfg.rcs_variance * ch.target_gain ** 2 * np.linalg.norm(echo_projection(W, a, ch)) ** 2
    return float(numerator / (cfg.noise_radar + np.linalg.norm(ch.si_channel @ AW) ** 2))


def delta_broadening(b, model: BeamwidthModel) -> float:
    """
    Beamwidth broadening from the first-order half-power expansion.

    Args:
        b: Receive indicator (binary, or relaxed inside the joint design).
        model: Beamwidth model of the target direction.

    Returns:
        Delta in radians.

    Raises:
        DegenerateGeometryError: b^T (Q2 - Q1) b vanishes.
    """
    b = np.asarray(b, dtype=float)
    numerator, denominator = model.broadening_terms(b)
    if model.is_degenerate(denominator, b):
        raise DegenerateGeometryError(f"broadening denominator {denominator:.3e} is numerically zero")
    return numerator / (2 * denominator)


def beamwidth_3db(delta: float, n_antennas: int) -> float:
    return NOMINAL_BEAMWIDTH / n_antennas + 2 * delta


def rmse_model(delta: float, sinr_radar: float, n_antennas: int) -> float:
    """sigma_theta = (0.7831 + 0.8839 * Delta * N) / (N * sqrt(SINR_r))."""
    if sinr_radar <= 0:
        raise ValueError(f"radar SINR must be positive, got {sinr_radar}")
    return (RMSE_INTERCEPT + RMSE_SLOPE * delta * n_antennas) / (n_antennas * np.sqrt(sinr_radar))


def rmse_from_beamwidth(theta_3db: float, sinr_radar: float) -> float:
    """sigma_theta = theta_3dB / (1.6 sqrt(2 SINR_r))."""
    return theta_3db / (1.6 * np.sqrt(2 * sinr_radar))


def dinkelbach_targets(W, a, b, ch: ChannelSet, cfg: ScenarioConfig,
                       model: BeamwidthModel) -> Tuple[float, float]:
    """
    Auxiliary ratio variables of the joint design.

    Returns:
        (t1, t2): t1 = (2|b^T h|^2 - |b^T 1|^2) / b^T (Q2 - Q1) b and t2 = the radar SINR lower bound.
    """
    b = np.asarray(b, dtype=float)
    numerator, denominator = model.broadening_terms(b)
    if model.is_degenerate(denominator, b):
        raise DegenerateGeometryError(f"broadening denominator {denominator:.3e} is numerically zero")
    t2 = radar_sinr_lower_bound(W, a, ch, cfg)
    if t2 <= 0:
        raise InfeasibleDesignError("radar SINR lower bound is not positive")
    return numerator / denominator, t2


def evaluate_design(partition: Partition, beamformer: Beamformer, ch: ChannelSet, cfg: ScenarioConfig,
                    model: Optional[BeamwidthModel] = None) -> MetricReport:
    """All closed-form metrics of a binary design."""
    model = model or BeamwidthModel.build(cfg.target_angle, cfg.n_antennas)
    sinr_exact = radar_sinr_exact(beamformer, partition, ch, cfg)
    sinr_lb = radar_sinr_lower_bound(beamformer, partition, ch, cfg)
    try:
        delta = delta_broadening(partition.b, model)
    except DegenerateGeometryError as e:
        logger.warning(f"Broadening undefined for partition {partition.a.tolist()}: {e}")
        delta = float("nan")

    rmse = rmse_model(delta, sinr_exact, cfg.n_antennas) if sinr_exact > 0 else float("inf")
    return MetricReport(
        sinr_comm=comm_sinrs(beamformer, partition, ch, cfg),
        sinr_radar_exact=sinr_exact,
        sinr_radar_lb=sinr_lb,
        delta=delta,
        beamwidth_3db=beamwidth_3db(delta, cfg.n_antennas),
        rmse_model=rmse
    )
