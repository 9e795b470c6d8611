"""
Baseline Partitions
Even, contiguous and random transmit/receive splits, each followed by the heuristic beamformer stage.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from error_handler import InvalidPartitionError
from modules.array_model import ChannelSet, Partition
from modules.heuristic_design import run_algorithm2
from modules.metrics import DesignResult
from scenario_settings import ScenarioConfig

logger = logging.getLogger(__name__)

BASELINE_VARIANTS = ("even", "cont", "rand")


@dataclass(frozen=True)
class BaselineKind:
    """Baseline strategy; cont and rand take N_t from a joint-design run."""
    variant: str
    n_transmit: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.variant not in BASELINE_VARIANTS:
            raise InvalidPartitionError(f"unknown baseline '{self.variant}', expected one of {BASELINE_VARIANTS}")
        if self.variant != "even" and self.n_transmit is None:
            raise InvalidPartitionError(f"baseline '{self.variant}' needs a transmit count")

    @classmethod
    def even(cls) -> "BaselineKind":
        return cls("even")

    @classmethod
    def contiguous(cls, n_transmit: int) -> "BaselineKind":
        return cls("cont", n_transmit)

    @classmethod
    def random(cls, n_transmit: int, seed: Optional[int] = None) -> "BaselineKind":
        return cls("rand", n_transmit, seed)


def make_partition(kind: BaselineKind, cfg: ScenarioConfig, alg1_nt: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> Partition:
    """
    Build a baseline partition.

    Args:
        kind: Baseline strategy.
        cfg: Scenario constants (N, K).
        alg1_nt: Transmit count from a joint-design run; overrides kind.n_transmit.
        rng: Generator for the random split (defaults to one seeded by kind.seed).

    Returns:
        Partition satisfying the transmit-count rules.

    Raises:
        InvalidPartitionError: N odd for the even split, or N_t outside [K, N-1].
    """
    N, K = cfg.n_antennas, cfg.n_users
    if kind.variant == "even":
        if N % 2:
            raise InvalidPartitionError(f"even split needs an even array size, got N={N}")
        return Partition.from_transmit_indices(range(N // 2), N, K)

    n_transmit = alg1_nt if alg1_nt is not None else kind.n_transmit
    if not K <= n_transmit <= N - 1:
        raise InvalidPartitionError(f"transmit count {n_transmit} outside [{K}, {N - 1}]")

    if kind.variant == "cont":
        return Partition.from_transmit_indices(range(n_transmit), N, K)

    rng = rng if rng is not None else np.random.default_rng(kind.seed)
    return Partition.from_transmit_indices(rng.choice(N, size=n_transmit, replace=False), N, K)


def run_baseline(kind: BaselineKind, ch: ChannelSet, cfg: ScenarioConfig, alg1_nt: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None) -> DesignResult:
    """Baseline partition with the heuristic beamformer stage (InfeasibleDesignError propagates)."""
    partition = make_partition(kind, cfg, alg1_nt, rng)
    logger.debug(f"{kind.variant}: transmit antennas {partition.transmit_indices.tolist()}")
    return run_algorithm2(ch, cfg, partition_override=partition, design=kind.variant)
