"""
Array Signal Model
Steering vectors, path loss, channel realizations and the partition/beamformer containers.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from error_handler import ConfigurationError, InvalidPartitionError
from scenario_settings import ScenarioConfig

logger = logging.getLogger(__name__)

# Element spacing in wavelengths; every distance below is expressed in units of lambda.
ELEMENT_SPACING = 0.5


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


def centered_positions(n_antennas: int) -> np.ndarray:
    """q = [(N-1)/2, (N-3)/2, ..., -(N-1)/2]."""
    return (n_antennas - 1) / 2.0 - np.arange(n_antennas, dtype=float)


def steering_vector(theta: float, n_antennas: int) -> np.ndarray:
    """
    Half-wavelength ULA response with centered phase reference.

    Args:
        theta: Direction in radians.
        n_antennas: Number of elements N.

    Returns:
        Complex N-vector with entries exp(-j*pi*q_n*sin(theta)).
    """
    if n_antennas < 1:
        raise ValueError("steering vector needs at least one element")
    return np.exp(-1j * np.pi * centered_positions(n_antennas) * np.sin(theta))


def steering_matrix(thetas: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Steering vectors for arbitrary element positions q (rows: angles)."""
    return np.exp(-1j * np.pi * np.outer(np.sin(thetas), positions))


def path_loss(distance: float, cfg: ScenarioConfig, exponent: float) -> float:
    """C0 * (d / d0)^(-alpha)."""
    if distance <= 0:
        raise ConfigurationError(f"distance must be positive, got {distance}")
    return cfg.pathloss_ref * (distance / cfg.ref_distance) ** (-exponent)


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization: users (K x N rows h_k), target and residual SI."""
    user_channels: np.ndarray
    target_channel: np.ndarray
    target_gain: float
    si_channel: np.ndarray
    user_angles: np.ndarray

    def __post_init__(self):
        for name in ("user_channels", "target_channel", "si_channel", "user_angles"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_antennas(self) -> int:
        return self.target_channel.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_channels.shape[0]

    @property
    def target_steering(self) -> np.ndarray:
        """Unit-modulus target steering vector h(theta_t)."""
        return self.target_channel / self.target_gain

    def with_si_channel(self, si_channel: np.ndarray) -> "ChannelSet":
        return ChannelSet(self.user_channels, self.target_channel, self.target_gain, si_channel, self.user_angles)


def draw_user_angles(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.user_angles and not cfg.redraw_user_angles:
        return np.asarray(cfg.user_angles, dtype=float)
    return rng.uniform(-np.pi / 2, np.pi / 2, size=cfg.n_users)


def gen_user_channels(cfg: ScenarioConfig, rng: np.random.Generator,
                      angles: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Rician user channels scaled by the user path loss.

    Args:
        cfg: Scenario constants.
        rng: Random generator (consumed for azimuths unless given, then NLoS parts).
        angles: Optional user azimuths in radians.

    Returns:
        K x N complex array, row k is h_k.
    """
    if angles is None:
        angles = draw_user_angles(cfg, rng)
    n = np.arange(cfg.n_antennas)
    los = np.exp(-1j * np.pi * np.outer(np.sin(angles), n))
    nlos = (rng.standard_normal((cfg.n_users, cfg.n_antennas))
            + 1j * rng.standard_normal((cfg.n_users, cfg.n_antennas))) / np.sqrt(2)

    kappa = cfg.rician_factor
    if np.isinf(kappa):
        los_weight, nlos_weight = 1.0, 0.0
    else:
        los_weight, nlos_weight = np.sqrt(kappa / (kappa + 1)), np.sqrt(1 / (kappa + 1))

    gains = np.array([np.sqrt(path_loss(d, cfg, cfg.pathloss_exp_user)) for d in cfg.user_distances])
    return gains[:, None] * (los_weight * los + nlos_weight * nlos)


def gen_target_channel(cfg: ScenarioConfig):
    """Returns (h_t, beta_t) with h_t = beta_t * h(theta_t)."""
    beta = float(np.sqrt(path_loss(cfg.target_distance, cfg, cfg.pathloss_exp_target)))
    return beta * steering_vector(cfg.target_angle, cfg.n_antennas), beta


def gen_si_channel(cfg: ScenarioConfig, si_amplitude: Optional[float] = None) -> np.ndarray:
    """Constant-modulus residual SI channel over the half-wavelength grid."""
    amplitude = cfg.si_amplitude if si_amplitude is None else si_amplitude
    positions = ELEMENT_SPACING * np.arange(cfg.n_antennas)
    distances = np.abs(positions[:, None] - positions[None, :])
    return amplitude * np.exp(-2j * np.pi * distances)


def perturb_si_channel(si_channel: np.ndarray, cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Actual SI channel H_SI + H~ with H~ entries CN(0, alpha_SI^2 * eps^2)."""
    if cfg.si_uncertainty <= 0:
        return si_channel
    scale = cfg.si_amplitude * np.sqrt(cfg.si_uncertainty / 2)
    shape = si_channel.shape
    return si_channel + scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def si_amplitude_for_ratio(ratio_db: float, cfg: ScenarioConfig) -> float:
    """SI amplitude giving ||H_SI||_F^2 / ||h_t h_t^T||_F^2 = ratio (alpha_SI^2 / beta_t^4)."""
    _, beta = gen_target_channel(cfg)
    return beta ** 2 * 10.0 ** (ratio_db / 20.0)


def draw_channels(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    """Full channel realization for one trial."""
    angles = draw_user_angles(cfg, rng)
    users = gen_user_channels(cfg, rng, angles)
    target, beta = gen_target_channel(cfg)
    return ChannelSet(users, target, beta, gen_si_channel(cfg), angles)


def trial_seed_sequences(seed: int, n_trials: int) -> Sequence[np.random.SeedSequence]:
    """
    Per-trial random streams.

    Trial i owns SeedSequence(seed).spawn(n)[i]. Its child 0 drives channels, child 1
    the SI perturbation, child 2 the random baseline and child 3 the echo samples.
    """
    return np.random.SeedSequence(seed).spawn(n_trials)


def child_sequence(sequence: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """The child spawn() would hand out at position key, without advancing the parent's counter."""
    return np.random.SeedSequence(sequence.entropy, spawn_key=tuple(sequence.spawn_key) + tuple(key),
                                  pool_size=sequence.pool_size)


def trial_generators(sequence: np.random.SeedSequence):
    """(channel, SI perturbation, baseline) generators of one trial."""
    channel_seq, echo_seq, baseline_seq = (child_sequence(sequence, i) for i in range(3))
    return (np.random.default_rng(channel_seq), np.random.default_rng(echo_seq),
            np.random.default_rng(baseline_seq))


@dataclass(frozen=True)
class Partition:
    """Binary transmit indicator a (1 = transmit, 0 = receive)."""
    a: np.ndarray
    n_users: int

    def __post_init__(self):
        a = np.asarray(self.a)
        if a.ndim != 1 or not np.all((a == 0) | (a == 1)):
            raise InvalidPartitionError("partition entries must be 0 or 1")
        n_transmit = int(a.sum())
        if not self.n_users <= n_transmit <= a.size - 1:
            raise InvalidPartitionError(
                f"transmit count {n_transmit} outside [{self.n_users}, {a.size - 1}]")
        object.__setattr__(self, "a", _frozen(a.astype(int)))

    @classmethod
    def from_transmit_indices(cls, indices, n_antennas: int, n_users: int) -> "Partition":
        a = np.zeros(n_antennas, dtype=int)
        a[np.asarray(list(indices), dtype=int)] = 1
        return cls(a, n_users)

    @property
    def b(self) -> np.ndarray:
        return 1 - self.a

    @property
    def n_antennas(self) -> int:
        return self.a.size

    @property
    def n_transmit(self) -> int:
        return int(self.a.sum())

    @property
    def n_receive(self) -> int:
        return self.n_antennas - self.n_transmit

    @property
    def transmit_indices(self) -> np.ndarray:
        return np.flatnonzero(self.a)

    @property
    def receive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.a == 0)

    @property
    def matrix(self) -> np.ndarray:
        """A = diag{a}."""
        return np.diag(self.a.astype(float))


@dataclass(frozen=True)
class Beamformer:
    """W = [W_c W_r]: K communication columns followed by N radar columns."""
    W: np.ndarray
    n_users: int

    def __post_init__(self):
        W = np.asarray(self.W, dtype=complex)
        if W.ndim != 2 or W.shape[1] != self.n_users + W.shape[0]:
            raise ValueError(f"beamformer must be N x (K+N), got {W.shape} for K={self.n_users}")
        object.__setattr__(self, "W", _frozen(W))

    @classmethod
    def zeros(cls, n_antennas: int, n_users: int) -> "Beamformer":
        return cls(np.zeros((n_antennas, n_antennas + n_users), dtype=complex), n_users)

    @property
    def comm(self) -> np.ndarray:
        return self.W[:, :self.n_users]

    @property
    def radar(self) -> np.ndarray:
        return self.W[:, self.n_users:]

    def effective(self, a: np.ndarray) -> np.ndarray:
        """A W for a (possibly relaxed) indicator a."""
        return np.asarray(a, dtype=float)[:, None] * self.W

    def transmit_power(self, a: np.ndarray) -> float:
        return float(np.linalg.norm(self.effective(a)) ** 2)

    def masked(self, partition: Partition) -> "Beamformer":
        """Rows of receive antennas zeroed."""
        return Beamformer(self.effective(partition.a), self.n_users)
