"""
DOA Evaluation
Echo synthesis on the receive sub-array, MUSIC estimation and Monte Carlo RMSE aggregation.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from error_handler import ISACError, InfeasibleDesignError, get_error_handler
from modules.array_model import (ChannelSet, centered_positions, child_sequence, draw_channels,
                                 perturb_si_channel, steering_matrix, trial_generators, trial_seed_sequences)
from modules.baselines import BaselineKind, run_baseline
from modules.heuristic_design import run_algorithm2
from modules.joint_design import run_algorithm1
from modules.metrics import DesignResult
from scenario_settings import DESIGN_NAMES, ScenarioConfig

logger = logging.getLogger(__name__)

POWER_REL_TOL = 1e-6
ECHO_STREAM = 3


def _complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    return np.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass
class SnapshotBatch:
    """Receive-side samples y_r (N_r x L) with the per-snapshot draws that produced them."""
    samples: np.ndarray
    receive_indices: np.ndarray
    symbols: np.ndarray
    target_gains: np.ndarray
    noise: np.ndarray

    @property
    def n_receive(self) -> int:
        return self.samples.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.samples.shape[1]

    def covariance(self) -> np.ndarray:
        return self.samples @ self.samples.conj().T / self.n_snapshots


@dataclass
class TrialRecord:
    trial_id: int
    channel_seed: int
    design: str
    estimated: float
    true: float
    squared_error: float
    feasible: bool
    n_receive: int = 0
    receive_indices: Tuple[int, ...] = field(default_factory=tuple)
    model_rmse: float = float("nan")
    iterations: int = 0

    def as_row(self) -> Dict:
        row = asdict(self)
        row["receive_indices"] = ";".join(str(i) for i in self.receive_indices)
        return row


def synthesize_echoes(design: DesignResult, ch: ChannelSet, cfg: ScenarioConfig, n_snapshots: int,
                      rng: np.random.Generator, si_channel: Optional[np.ndarray] = None) -> SnapshotBatch:
    """
    Receive-array samples: target echo, SI leakage and noise.

    Args:
        design: Partition and beamformer.
        ch: Channel realization.
        cfg: Scenario constants (sigma_t^2, sigma_r^2).
        n_snapshots: L.
        rng: Echo generator. Symbols, gains and full-array noise are drawn in a fixed
            order, so designs fed from equal generators share one noise realization.
        si_channel: Actual SI channel (defaults to the nominal one).

    Returns:
        SnapshotBatch with rows for the receive antennas only.
    """
    if n_snapshots < 1:
        raise ValueError(f"snapshot count must be positive, got {n_snapshots}")
    si_channel = ch.si_channel if si_channel is None else si_channel
    rx = design.partition.receive_indices
    AW = design.beamformer.effective(design.partition.a)

    symbols = _complex_normal(rng, (AW.shape[1], n_snapshots))
    gains = _complex_normal(rng, n_snapshots, cfg.rcs_variance)
    noise = _complex_normal(rng, (ch.n_antennas, n_snapshots), cfg.noise_radar)[rx]

    transmitted = AW @ symbols
    echo = np.outer(ch.target_channel[rx], gains * (ch.target_channel @ transmitted))
    samples = echo + si_channel[rx] @ transmitted + noise
    return SnapshotBatch(samples, rx, symbols, gains, noise)


def music_null_spectrum(covariance: np.ndarray, positions: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """||E_n^H a(theta)||^2 over the grid for a single-source signal subspace."""
    _, eigvecs = np.linalg.eigh((covariance + covariance.conj().T) / 2)
    noise_subspace = eigvecs[:, :-1]
    return np.sum(np.abs(steering_matrix(grid, positions) @ noise_subspace.conj()) ** 2, axis=1)


def music_grid(size: int) -> np.ndarray:
    return np.linspace(-np.pi / 2, np.pi / 2, size, endpoint=False)


def music_estimate(batch, receive_positions: np.ndarray, grid: np.ndarray) -> float:
    """
    Single-target MUSIC on a sparse receive array.

    Args:
        batch: SnapshotBatch or an N_r x N_r sample covariance.
        receive_positions: Centered element positions of the receive antennas.
        grid: Search angles in [-pi/2, pi/2).

    Returns:
        Pseudospectrum peak refined by 3-point quadratic interpolation.

    Raises:
        ValueError: fewer than two receive antennas.
    """
    covariance = batch.covariance() if isinstance(batch, SnapshotBatch) else np.asarray(batch)
    positions = np.asarray(receive_positions, dtype=float)
    if positions.size < 2:
        raise ValueError(f"MUSIC needs at least two receive antennas, got {positions.size}")

    null = music_null_spectrum(covariance, positions, grid)
    i = int(np.argmin(null))
    if i == 0 or i == grid.size - 1:
        return float(grid[i])
    left, center, right = null[i - 1:i + 2]
    curvature = left - 2 * center + right
    offset = 0.5 * (left - right) / curvature if curvature > 0 else 0.0
    return float(grid[i] + np.clip(offset, -0.5, 0.5) * (grid[1] - grid[0]))


def pseudospectrum(covariance: np.ndarray, positions: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(music_null_spectrum(covariance, positions, grid), np.finfo(float).tiny)


def _infeasible(trial_id: int, channel_seed: int, design: str, cfg: ScenarioConfig) -> TrialRecord:
    return TrialRecord(trial_id, channel_seed, design, float("nan"), cfg.target_angle, float("nan"), False)


def _design(name: str, ch: ChannelSet, cfg: ScenarioConfig, alg1: Optional[DesignResult],
            rng: np.random.Generator) -> DesignResult:
    if name == "alg2":
        return run_algorithm2(ch, cfg)
    if name == "even":
        return run_baseline(BaselineKind.even(), ch, cfg)
    if alg1 is None:
        raise InfeasibleDesignError(f"'{name}' needs the joint-design transmit count, which is unavailable")
    if name == "cont":
        return run_baseline(BaselineKind.contiguous(alg1.partition.n_transmit), ch, cfg)
    return run_baseline(BaselineKind.random(alg1.partition.n_transmit), ch, cfg, rng=rng)


def _meets_constraints(result: DesignResult, cfg: ScenarioConfig) -> bool:
    power_ok = result.beamformer.transmit_power(result.partition.a) <= cfg.power_budget * (1 + POWER_REL_TOL)
    return power_ok and result.metrics.meets_sinr(cfg.sinr_thresholds)


def run_trial(trial_id: int, sequence: np.random.SeedSequence, cfg: ScenarioConfig,
              designs: Sequence[str] = DESIGN_NAMES, n_snapshots: Optional[int] = None) -> List[TrialRecord]:
    """
    One channel draw evaluated for every design.

    Every design sees the same echo symbols, target gains and per-antenna noise.
    Design failures become infeasible records; the trial never raises for them.
    """
    n_snapshots = n_snapshots or cfg.snapshots
    channel_rng, si_rng, baseline_rng = trial_generators(sequence)
    echo_sequence = child_sequence(sequence, ECHO_STREAM)
    channel_seed = int(sequence.generate_state(1)[0])
    ch = draw_channels(cfg, channel_rng)
    si_actual = perturb_si_channel(ch.si_channel, cfg, si_rng)
    grid = music_grid(cfg.music_grid_size)
    positions = centered_positions(cfg.n_antennas)
    handler = get_error_handler()

    alg1 = None
    if any(name in designs for name in ("alg1", "cont", "rand")):
        try:
            alg1 = run_algorithm1(ch, cfg)
        except ISACError as e:
            handler.handle_error(e, f"trial {trial_id}", "alg1")

    records = []
    for name in designs:
        try:
            result = alg1 if name == "alg1" else _design(name, ch, cfg, alg1, baseline_rng)
            if result is None:
                raise InfeasibleDesignError("joint design failed for this channel draw")
            if not _meets_constraints(result, cfg):
                raise InfeasibleDesignError(f"{name} design violates the SINR or power constraints")
            echo_rng = np.random.default_rng(echo_sequence)
            batch = synthesize_echoes(result, ch, cfg, n_snapshots, echo_rng, si_actual)
            estimate = music_estimate(batch, positions[result.partition.receive_indices], grid)
        except (ISACError, ValueError) as e:
            if name != "alg1" or alg1 is not None:
                handler.handle_error(e, f"trial {trial_id}", name)
            records.append(_infeasible(trial_id, channel_seed, name, cfg))
            continue

        records.append(TrialRecord(
            trial_id=trial_id,
            channel_seed=channel_seed,
            design=name,
            estimated=estimate,
            true=cfg.target_angle,
            squared_error=(estimate - cfg.target_angle) ** 2,
            feasible=True,
            n_receive=result.partition.n_receive,
            receive_indices=tuple(int(i) for i in result.partition.receive_indices),
            model_rmse=result.metrics.rmse_model,
            iterations=result.iterations,
        ))
    return records


def summarize_records(records: Sequence[TrialRecord]) -> pd.DataFrame:
    """Per-design RMSE over feasible trials with trial and exclusion counts."""
    frame = pd.DataFrame([r.as_row() for r in records])
    if frame.empty:
        return pd.DataFrame(columns=["design", "rmse_rad", "rmse_deg", "model_rmse_rad",
                                     "mean_receive_count", "trials", "infeasible"])
    rows = []
    for design, group in frame.groupby("design", sort=False):
        feasible = group[group["feasible"]]
        rmse = float(np.sqrt(feasible["squared_error"].mean())) if len(feasible) else float("nan")
        rows.append({
            "design": design,
            "rmse_rad": rmse,
            "rmse_deg": float(np.degrees(rmse)),
            "model_rmse_rad": float(np.sqrt((feasible["model_rmse"] ** 2).mean())) if len(feasible) else float("nan"),
            "mean_receive_count": float(feasible["n_receive"].mean()) if len(feasible) else float("nan"),
            "trials": int(len(group)),
            "infeasible": int((~group["feasible"]).sum()),
        })
    return pd.DataFrame(rows)


def run_monte_carlo(designs: Sequence[str], cfg: ScenarioConfig, n_trials: int, n_snapshots: Optional[int] = None,
                    seed: Optional[int] = None, threads: int = 1) -> Tuple[pd.DataFrame, List[TrialRecord]]:
    """
    Independent trials, each with its own spawned random streams.

    Args:
        designs: Design names to evaluate.
        cfg: Scenario constants.
        n_trials: Number of channel draws.
        n_snapshots: L (defaults to cfg.snapshots).
        seed: Root seed (defaults to cfg.rng_seed).
        threads: joblib worker count.

    Returns:
        (per-design summary, trial records in trial order)
    """
    if n_trials < 1:
        raise ValueError(f"trial count must be positive, got {n_trials}")
    sequences = trial_seed_sequences(cfg.rng_seed if seed is None else seed, n_trials)
    batches = Parallel(n_jobs=threads)(
        delayed(run_trial)(i, seq, cfg, tuple(designs), n_snapshots) for i, seq in enumerate(sequences))
    records = [record for batch in batches for record in batch]

    summary = summarize_records(records)
    logger.info(f"Monte Carlo: {n_trials} trials, designs {list(designs)}")
    return summary, records
