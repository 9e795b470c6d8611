"""
Experiment Records
Collects sweep summaries, trial rows and iteration traces, and writes them as CSV.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from modules.doa_evaluation import TrialRecord

logger = logging.getLogger("isac.main")

SUMMARY_COLUMNS = ["design", "rmse_rad", "rmse_deg", "model_rmse_rad", "mean_receive_count", "trials", "infeasible"]


def receive_probabilities(records: Sequence[TrialRecord], n_antennas: int) -> pd.DataFrame:
    """
    Per-position probability of being a receive antenna, per design.

    Probabilities are taken over feasible trials; they sum to the mean N_r.
    """
    rows = []
    designs = list(dict.fromkeys(r.design for r in records))
    for design in designs:
        feasible = [r for r in records if r.design == design and r.feasible]
        counts = np.zeros(n_antennas)
        for record in feasible:
            counts[list(record.receive_indices)] += 1
        probability = counts / len(feasible) if feasible else np.full(n_antennas, np.nan)
        for position in range(n_antennas):
            rows.append({"position": position, "design": design,
                         "receive_probability": probability[position], "trials": len(feasible)})
    return pd.DataFrame(rows, columns=["position", "design", "receive_probability", "trials"])


class ExperimentRecorder:
    """
    Single collector for one experiment; every CSV write goes through it.
    """

    def __init__(self, output_dir: str, experiment: str, sweep_column: str):
        self.output_dir = Path(output_dir)
        self.experiment = experiment
        self.sweep_column = sweep_column
        self.summaries: List[pd.DataFrame] = []
        self.trials: List[pd.DataFrame] = []
        self.traces: List[pd.DataFrame] = []

    def add_sweep_point(self, value: float, summary: pd.DataFrame, records: Sequence[TrialRecord]):
        summary = summary.reindex(columns=SUMMARY_COLUMNS)
        summary.insert(0, self.sweep_column, value)
        self.summaries.append(summary)

        trial_rows = pd.DataFrame([r.as_row() for r in records])
        trial_rows.insert(0, self.sweep_column, value)
        self.trials.append(trial_rows)

    def add_trace(self, design: str, trace: pd.DataFrame):
        trace = trace.copy()
        trace.insert(0, "design", design)
        self.traces.append(trace)

    @property
    def summary(self) -> pd.DataFrame:
        if not self.summaries:
            return pd.DataFrame(columns=[self.sweep_column] + SUMMARY_COLUMNS)
        return pd.concat(self.summaries, ignore_index=True)

    @property
    def trial_table(self) -> pd.DataFrame:
        return pd.concat(self.trials, ignore_index=True) if self.trials else pd.DataFrame()

    def all_infeasible(self) -> bool:
        summary = self.summary
        return bool(len(summary)) and bool((summary["infeasible"] == summary["trials"]).all())

    def write(self, table: Optional[pd.DataFrame] = None) -> Dict[str, Path]:
        """
        Write <experiment>.csv (the given table, else the sweep summary or the traces)
        and trials_<experiment>.csv when trial rows were collected.
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if table is None:
            table = pd.concat(self.traces, ignore_index=True) if self.traces else self.summary

        written = {"results": self.output_dir / f"{self.experiment}.csv"}
        table.to_csv(written["results"], index=False)
        if self.trials:
            written["trials"] = self.output_dir / f"trials_{self.experiment}.csv"
            self.trial_table.to_csv(written["trials"], index=False)

        for path in written.values():
            logger.info(f"Wrote {path}")
        return written

    def compare_designs(self) -> Dict:
        """Designs ranked by mean RMSE over the sweep, with the reduction against the even split."""
        summary = self.summary.dropna(subset=["rmse_rad"])
        if summary.empty:
            return {}
        mean_rmse = summary.groupby("design")["rmse_rad"].mean().sort_values()
        comparison = {"ranking": list(mean_rmse.index), "mean_rmse_rad": mean_rmse.to_dict()}
        if "even" in mean_rmse.index and mean_rmse["even"] > 0:
            comparison["reduction_vs_even"] = {
                design: float(1 - value / mean_rmse["even"]) for design, value in mean_rmse.items()
            }
        return comparison
