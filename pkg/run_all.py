"""
ISAC Array Partitioning - Experiment Runner
Parses a scenario config, runs one named experiment and writes its CSV files.
"""

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, Optional

from error_handler import ConfigurationError, ISACError, ISACErrorHandler
from experiment_records import ExperimentRecorder, receive_probabilities
from modules.array_model import draw_channels, si_amplitude_for_ratio, trial_generators, trial_seed_sequences
from modules.doa_evaluation import run_monte_carlo
from modules.heuristic_design import run_algorithm2
from modules.joint_design import run_algorithm1
from scenario_settings import (ExperimentSpec, ScenarioConfig, ScenarioSettingsManager, db_to_linear,
                               parse_config)

DEFAULT_CONFIG = Path(__file__).resolve().parent / "config" / "default_scenario.cfg"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def apply_sweep(experiment: str, value: float, cfg: ScenarioConfig) -> ScenarioConfig:
    """Scenario for one sweep point."""
    if experiment == "rmse_vs_power":
        return cfg.with_updates(power_budget=value)
    if experiment == "rmse_vs_antennas":
        return cfg.with_updates(n_antennas=int(value))
    if experiment == "rmse_vs_sinr":
        return cfg.with_updates(sinr_thresholds=(db_to_linear(value),))
    if experiment == "rmse_vs_doa":
        return cfg.with_updates(target_angle=math.radians(value))
    if experiment == "rmse_vs_si":
        return cfg.with_updates(si_amplitude=si_amplitude_for_ratio(value, cfg))
    if experiment == "rmse_vs_si_uncertainty":
        return cfg.with_updates(si_uncertainty=value)
    return cfg


class ISACExperimentOrchestrator:
    """
    Runs named experiments and hands every result to a single CSV collector.
    """

    def __init__(self, cfg: ScenarioConfig, error_handler: Optional[ISACErrorHandler] = None):
        self.cfg = cfg
        self.error_handler = error_handler or ISACErrorHandler()
        self.logger = self.error_handler.logger

    def run_experiment(self, spec: ExperimentSpec, cfg: Optional[ScenarioConfig] = None) -> int:
        """
        Execute spec and write its CSV files into spec.output_dir.

        Returns:
            Exit code: 0 on success, 3 when every trial was infeasible.
        """
        cfg = cfg or self.cfg
        recorder = ExperimentRecorder(spec.output_dir, spec.name, spec.sweep_column)
        self.logger.info(f"Experiment {spec.name}: designs {list(spec.designs)}, {spec.trials} trials, "
                         f"seed {cfg.rng_seed}")

        if spec.name == "convergence":
            ok = self._run_convergence(spec, cfg, recorder)
            recorder.write()
        elif spec.name == "partition_probability":
            summary, records = run_monte_carlo(spec.designs, cfg, spec.trials, threads=spec.threads)
            recorder.add_sweep_point(0.0, summary, records)
            recorder.write(receive_probabilities(records, cfg.n_antennas))
            ok = not recorder.all_infeasible()
        else:
            for value in spec.sweep:
                point = apply_sweep(spec.name, value, cfg)
                print(f"📊 {spec.sweep_column} = {value:g}")
                summary, records = run_monte_carlo(spec.designs, point, spec.trials, threads=spec.threads)
                recorder.add_sweep_point(value, summary, records)
                for row in summary.itertuples():
                    print(f"   {row.design:>5}: RMSE {row.rmse_deg:.4f} deg "
                          f"({row.infeasible}/{row.trials} infeasible)")
            recorder.write()
            ok = not recorder.all_infeasible()
            comparison = recorder.compare_designs()
            if comparison:
                self.logger.info(f"Design ranking by mean RMSE: {comparison['ranking']}")

        ScenarioSettingsManager(str(Path(spec.output_dir) / "scenario.json")).save_settings(cfg, spec)
        health = self.error_handler.get_run_health()
        self.logger.info(f"Run health: {health['status']} ({health['total_errors']} recorded errors)")
        return EXIT_OK if ok else EXIT_INFEASIBLE

    def _run_convergence(self, spec: ExperimentSpec, cfg: ScenarioConfig, recorder: ExperimentRecorder) -> bool:
        """Iteration traces of the two optimizers on the first trial's channel draw."""
        channel_rng, _, _ = trial_generators(trial_seed_sequences(cfg.rng_seed, 1)[0])
        ch = draw_channels(cfg, channel_rng)
        runners = {"alg1": run_algorithm1, "alg2": run_algorithm2}
        ok = False
        for design in spec.designs:
            if design not in runners:
                self.logger.info(f"Convergence traces are recorded for alg1/alg2 only; skipping {design}")
                continue
            try:
                result = runners[design](ch, cfg)
            except ISACError as e:
                self.error_handler.handle_error(e, "convergence", design)
                continue
            recorder.add_trace(design, result.trace)
            print(f"📈 {design}: {result.status} after {result.iterations} iterations")
            ok = True
        return ok


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Joint array partitioning and beamforming experiments")
    parser.add_argument("--config", default=str(DEFAULT_CONFIG), help="Scenario config file")
    parser.add_argument("--experiment", help="Experiment name (overrides the config file)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per sweep point")
    parser.add_argument("--seed", type=int, help="Root random seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--threads", type=int, help="Worker processes (-1 for all cores)")
    return parser


def resolve_run(args: argparse.Namespace):
    """Config file plus command-line overrides."""
    cfg, spec = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_updates(rng_seed=args.seed)

    changes: Dict = {}
    if args.experiment and args.experiment != spec.name:
        changes.update(name=args.experiment, sweep=())
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out:
        changes["output_dir"] = args.out
    if args.threads is not None:
        changes["threads"] = args.threads
    if changes:
        spec = replace(spec, **changes)
    return cfg, spec


def main(argv=None) -> int:
    """Main entry point for the experiment runner."""
    args = build_parser().parse_args(argv)
    try:
        cfg, spec = resolve_run(args)
    except ConfigurationError as e:
        print(f"❌ Configuration error: {e}")
        return EXIT_CONFIG

    print(f"🚀 {spec.name}: N={cfg.n_antennas}, K={cfg.n_users}, P={cfg.power_budget:g} W, "
          f"{spec.trials} trials -> {spec.output_dir}")
    orchestrator = ISACExperimentOrchestrator(cfg)
    try:
        code = orchestrator.run_experiment(spec)
    except ConfigurationError as e:
        print(f"❌ Configuration error: {e}")
        return EXIT_CONFIG

    if code == EXIT_INFEASIBLE:
        print("⚠️ Every trial was infeasible for this scenario")
    else:
        print(f"✅ Results written to {spec.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
