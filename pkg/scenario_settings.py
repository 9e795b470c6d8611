"""
Scenario and Experiment Settings for the ISAC Array Partitioning Toolkit
Physical constants, algorithm knobs, the unit-tagged config file format and JSON export.
"""

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from error_handler import ConfigurationError


def dbm_to_watts(dbm: float) -> float:
    """P[W] = 10^((dBm - 30) / 10)."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


DEFAULT_SINR_DB = 10.0
DEFAULT_USER_DISTANCE = 50.0

DESIGN_NAMES = ("alg1", "alg2", "even", "cont", "rand")

# experiment name -> (sweep column, sweep unit, default sweep grid)
SWEEP_AXES: Dict[str, Tuple[str, str, Tuple[float, ...]]] = {
    "rmse_vs_power": ("power_W", "W", (4.0, 6.0, 8.0)),
    "rmse_vs_antennas": ("n_antennas", "", (12.0, 16.0, 20.0)),
    "rmse_vs_sinr": ("sinr_dB", "dB", (6.0, 10.0, 14.0)),
    "rmse_vs_doa": ("doa_deg", "deg", (0.0, 30.0, 60.0)),
    "rmse_vs_si": ("si_ratio_dB", "dB", (40.0, 50.0, 60.0, 70.0)),
    "rmse_vs_si_uncertainty": ("si_uncertainty", "", (0.0, 0.01, 0.05, 0.1)),
    "convergence": ("iteration", "", (0.0,)),
    "partition_probability": ("position", "", (0.0,)),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical scenario and algorithm constants (defaults reproduce the reference setup)."""
    n_antennas: int = 30
    n_users: int = 6
    power_budget: float = 6.0
    sinr_thresholds: Tuple[float, ...] = ()
    noise_user: float = dbm_to_watts(-80.0)
    noise_radar: float = dbm_to_watts(-80.0)
    rcs_variance: float = 1.0
    target_angle: float = math.pi / 6
    target_distance: float = 30.0
    user_distances: Tuple[float, ...] = ()
    pathloss_ref: float = db_to_linear(-30.0)
    ref_distance: float = 1.0
    pathloss_exp_target: float = 2.8
    pathloss_exp_user: float = 3.5
    rician_factor: float = db_to_linear(3.0)
    si_amplitude: float = math.sqrt(dbm_to_watts(-60.0))
    max_iters: int = 1000
    conv_tol: float = 1e-3
    rng_seed: int = 0

    # Evaluation and solver knobs
    snapshots: int = 64
    music_grid_size: int = 4096
    si_uncertainty: float = 0.0
    redraw_user_angles: bool = True
    user_angles: Tuple[float, ...] = ()
    solver_tol: float = 1e-6
    solver_max_iter: int = 200
    rounding_candidates: int = 3

    def __post_init__(self):
        object.__setattr__(self, "sinr_thresholds", self._per_user(
            "sinr_thresholds", self.sinr_thresholds, db_to_linear(DEFAULT_SINR_DB)))
        object.__setattr__(self, "user_distances", self._per_user(
            "user_distances", self.user_distances, DEFAULT_USER_DISTANCE))
        object.__setattr__(self, "user_angles", tuple(float(v) for v in self.user_angles))
        self._validate()

    def _per_user(self, name: str, values, default: float) -> Tuple[float, ...]:
        values = tuple(float(v) for v in values)
        if not values:
            return (default,) * self.n_users
        if len(values) == self.n_users:
            return values
        if len(set(values)) == 1:
            return (values[0],) * self.n_users
        raise ConfigurationError(
            f"{name} has {len(values)} entries for {self.n_users} users", key=name)

    def _validate(self):
        checks = [
            ("n_antennas", self.n_antennas >= 2, "N must be at least 2"),
            ("n_users", self.n_users >= 1, "K must be positive"),
            ("n_users", self.n_users < self.n_antennas, "K must be smaller than N"),
            ("power_budget", self.power_budget > 0, "P must be positive"),
            ("sinr_thresholds", all(g > 0 for g in self.sinr_thresholds), "SINR thresholds must be positive"),
            ("noise_user", self.noise_user > 0, "user noise power must be positive"),
            ("noise_radar", self.noise_radar > 0, "radar noise power must be positive"),
            ("rcs_variance", self.rcs_variance > 0, "RCS variance must be positive"),
            ("target_angle", -math.pi / 2 <= self.target_angle < math.pi / 2, "target angle must lie in [-pi/2, pi/2)"),
            ("target_distance", self.target_distance > 0, "target distance must be positive"),
            ("user_distances", all(d > 0 for d in self.user_distances), "user distances must be positive"),
            ("pathloss_ref", self.pathloss_ref > 0, "reference path loss must be positive"),
            ("ref_distance", self.ref_distance > 0, "reference distance must be positive"),
            ("rician_factor", self.rician_factor >= 0, "Rician factor must be non-negative"),
            ("si_amplitude", self.si_amplitude >= 0, "SI amplitude must be non-negative"),
            ("max_iters", self.max_iters >= 1, "max_iters must be positive"),
            ("conv_tol", self.conv_tol > 0, "convergence tolerance must be positive"),
            ("snapshots", self.snapshots >= 1, "snapshot count must be positive"),
            ("music_grid_size", self.music_grid_size >= 16, "MUSIC grid needs at least 16 points"),
            ("si_uncertainty", self.si_uncertainty >= 0, "SI uncertainty must be non-negative"),
            ("solver_tol", self.solver_tol > 0, "solver tolerance must be positive"),
            ("solver_max_iter", self.solver_max_iter >= 1, "solver iteration cap must be positive"),
            ("rounding_candidates", self.rounding_candidates >= 0, "rounding candidate count must be non-negative"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise ConfigurationError(message, key=key)
        if self.user_angles and len(self.user_angles) != self.n_users:
            raise ConfigurationError("user_angles needs one azimuth per user", key="user_angles")

    @property
    def noise_users(self) -> Tuple[float, ...]:
        return (self.noise_user,) * self.n_users

    def with_updates(self, **changes) -> "ScenarioConfig":
        """Copy with some fields replaced (validation runs again)."""
        return replace(self, **changes)


@dataclass(frozen=True)
class ExperimentSpec:
    """Which experiment to run, over which sweep and designs."""
    name: str = "rmse_vs_power"
    sweep: Tuple[float, ...] = ()
    designs: Tuple[str, ...] = DESIGN_NAMES
    trials: int = 300
    output_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.name not in SWEEP_AXES:
            raise ConfigurationError(
                f"unknown experiment '{self.name}' (choose from {', '.join(SWEEP_AXES)})", key="name")
        sweep = tuple(float(v) for v in self.sweep) or SWEEP_AXES[self.name][2]
        object.__setattr__(self, "sweep", sweep)
        object.__setattr__(self, "designs", tuple(self.designs))

        if not self.designs:
            raise ConfigurationError("design list is empty", key="designs")
        unknown = [d for d in self.designs if d not in DESIGN_NAMES]
        if unknown:
            raise ConfigurationError(f"unknown designs {unknown}", key="designs")
        if len(set(self.designs)) != len(self.designs):
            raise ConfigurationError("duplicate designs", key="designs")
        if self.trials < 1:
            raise ConfigurationError("trials must be positive", key="trials")
        if self.threads == 0 or self.threads < -1:
            raise ConfigurationError("threads must be positive or -1 (all cores)", key="threads")

    @property
    def sweep_column(self) -> str:
        return SWEEP_AXES[self.name][0]


# Config file keys: key -> (field, quantity kind)
_SCENARIO_KEYS: Dict[str, Tuple[str, str]] = {
    "n_antennas": ("n_antennas", "count"),
    "n_users": ("n_users", "count"),
    "power_budget": ("power_budget", "power"),
    "sinr_thresholds": ("sinr_thresholds", "ratio_list"),
    "noise_user": ("noise_user", "power"),
    "noise_radar": ("noise_radar", "power"),
    "rcs_variance": ("rcs_variance", "real"),
    "target_angle": ("target_angle", "angle"),
    "target_distance": ("target_distance", "distance"),
    "user_distances": ("user_distances", "distance_list"),
    "pathloss_ref": ("pathloss_ref", "ratio"),
    "ref_distance": ("ref_distance", "distance"),
    "pathloss_exp_target": ("pathloss_exp_target", "real"),
    "pathloss_exp_user": ("pathloss_exp_user", "real"),
    "rician_factor": ("rician_factor", "ratio"),
    "si_amplitude": ("si_amplitude", "amplitude"),
    "si_power": ("si_amplitude", "si_power"),
    "max_iters": ("max_iters", "count"),
    "conv_tol": ("conv_tol", "real"),
    "rng_seed": ("rng_seed", "integer"),
    "snapshots": ("snapshots", "count"),
    "music_grid_size": ("music_grid_size", "count"),
    "si_uncertainty": ("si_uncertainty", "real"),
    "redraw_user_angles": ("redraw_user_angles", "bool"),
    "user_angles": ("user_angles", "angle_list"),
    "solver_tol": ("solver_tol", "real"),
    "solver_max_iter": ("solver_max_iter", "count"),
    "rounding_candidates": ("rounding_candidates", "integer"),
}

_ALIASES = {
    "N": "n_antennas", "K": "n_users", "P": "power_budget", "Gamma": "sinr_thresholds",
    "sigma_k": "noise_user", "sigma_r": "noise_radar", "sigma_t": "rcs_variance",
    "theta_t": "target_angle", "d_t": "target_distance", "d_k": "user_distances",
    "C0": "pathloss_ref", "d0": "ref_distance", "alpha_t": "pathloss_exp_target",
    "alpha_u": "pathloss_exp_user", "kappa": "rician_factor", "alpha_si": "si_amplitude",
    "N_max": "max_iters", "delta_th": "conv_tol", "seed": "rng_seed", "L": "snapshots",
    "epsilon_sq": "si_uncertainty",
}

_EXPERIMENT_KEYS = {
    "experiment": "name", "sweep": "sweep", "designs": "designs",
    "trials": "trials", "output": "output_dir", "threads": "threads",
}

_UNITS = {
    "power": {"W", "mW", "dBm", "dBW"},
    "ratio": {"lin", "dB"},
    "amplitude": {"lin", "dB"},
    "si_power": {"W", "mW", "dBm", "dBW"},
    "angle": {"rad", "deg"},
    "distance": {"m"},
}
_ALL_UNITS = set().union(*_UNITS.values())


def _to_watts(value: float, unit: Optional[str]) -> float:
    if unit == "dBm":
        return dbm_to_watts(value)
    if unit == "dBW":
        return db_to_linear(value)
    if unit == "mW":
        return value * 1e-3
    return value


def _convert(value: float, kind: str, unit: Optional[str]) -> float:
    base = kind.replace("_list", "")
    if base == "power":
        return _to_watts(value, unit)
    if base == "si_power":
        return math.sqrt(_to_watts(value, unit))
    if base == "ratio":
        return db_to_linear(value) if unit == "dB" else value
    if base == "amplitude":
        return 10.0 ** (value / 20.0) if unit == "dB" else value
    if base == "angle":
        return math.radians(value) if unit == "deg" else value
    return value


def _split_value(raw: str, line_number: int) -> Tuple[List[str], Optional[str]]:
    unit = None
    parts = raw.rsplit(None, 1)
    if len(parts) == 2 and parts[1] in _ALL_UNITS:
        raw, unit = parts
    items = [t.strip() for t in raw.split(",") if t.strip()]
    if not items:
        raise ConfigurationError("missing value", line_number=line_number)
    return items, unit


def _parse_scalar(text: str, kind: str, line_number: int, key: str):
    try:
        if kind in ("count", "integer"):
            number = float(text)
            if not number.is_integer():
                raise ValueError(text)
            return int(number)
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        return float(text)
    except ValueError:
        raise ConfigurationError(f"cannot parse '{text}' for {key}", line_number=line_number, key=key)


def parse_config_text(text: str) -> Tuple[ScenarioConfig, ExperimentSpec]:
    """Parse the body of a config file; see parse_config."""
    scenario_values: Dict[str, object] = {}
    experiment_values: Dict[str, object] = {}
    key_lines: Dict[str, int] = {}

    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            if line[1:-1].strip() not in ("scenario", "experiment"):
                raise ConfigurationError(f"unknown section {line}", line_number=line_number)
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value [unit]', got '{line}'", line_number=line_number)

        key, raw = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key in key_lines:
            raise ConfigurationError(f"duplicate key '{key}'", line_number=line_number, key=key)

        if key in _EXPERIMENT_KEYS:
            target = _EXPERIMENT_KEYS[key]
            key_lines[target] = line_number
            if target in ("name", "output_dir"):
                experiment_values[target] = raw
            elif target == "designs":
                experiment_values[target] = tuple(d.strip() for d in raw.split(",") if d.strip())
            elif target == "sweep":
                items, unit = _split_value(raw, line_number)
                experiment_values[target] = tuple(_parse_scalar(v, "real", line_number, key) for v in items)
                key_lines["sweep_unit"] = line_number
                experiment_values["_sweep_unit"] = unit
            else:
                experiment_values[target] = _parse_scalar(raw, "integer", line_number, key)
            continue

        if key not in _SCENARIO_KEYS:
            raise ConfigurationError(f"unknown key '{key}'", line_number=line_number, key=key)

        target, kind = _SCENARIO_KEYS[key]
        key_lines[target] = line_number
        items, unit = _split_value(raw, line_number)
        base = kind.replace("_list", "")
        allowed = _UNITS.get(base, set())
        if unit is not None and unit not in allowed:
            raise ConfigurationError(f"unit '{unit}' not valid for {key}", line_number=line_number, key=key)
        if not kind.endswith("_list") and len(items) != 1:
            raise ConfigurationError(f"{key} takes a single value", line_number=line_number, key=key)

        parsed = [_parse_scalar(v, base if base in ("count", "integer", "bool") else "real", line_number, key)
                  for v in items]
        if base not in ("count", "integer", "bool"):
            parsed = [_convert(v, kind, unit) for v in parsed]
        scenario_values[target] = tuple(parsed) if kind.endswith("_list") else parsed[0]

    sweep_unit = experiment_values.pop("_sweep_unit", None)
    try:
        cfg = ScenarioConfig(**scenario_values)
        spec = ExperimentSpec(**experiment_values)
    except ConfigurationError as e:
        if e.line_number is None and e.key in key_lines:
            raise ConfigurationError(str(e), line_number=key_lines[e.key], key=e.key) from e
        raise

    expected_unit = SWEEP_AXES[spec.name][1]
    if sweep_unit is not None and sweep_unit != expected_unit:
        raise ConfigurationError(
            f"sweep for {spec.name} is in '{expected_unit or 'no unit'}', got '{sweep_unit}'",
            line_number=key_lines.get("sweep_unit"), key="sweep")
    return cfg, spec


def parse_config(path) -> Tuple[ScenarioConfig, ExperimentSpec]:
    """
    Read a "key = value [unit]" config file.

    Args:
        path: Config file path.

    Returns:
        Validated (ScenarioConfig, ExperimentSpec).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


_EMIT_UNITS = {"power": "W", "ratio": "lin", "amplitude": "lin", "angle": "rad", "distance": "m"}


def emit_config(cfg: ScenarioConfig, spec: Optional[ExperimentSpec] = None) -> str:
    """Write a config in canonical linear units; parse_config_text inverts it exactly."""
    lines = ["[scenario]"]
    for key, (target, kind) in _SCENARIO_KEYS.items():
        if key != target:
            continue
        value = getattr(cfg, target)
        base = kind.replace("_list", "")
        unit = _EMIT_UNITS.get(base, "")
        if kind.endswith("_list"):
            if not value:
                continue
            text = ", ".join(repr(float(v)) for v in value)
        elif base == "bool":
            text = "true" if value else "false"
        elif base in ("count", "integer"):
            text = str(int(value))
        else:
            text = repr(float(value))
        lines.append(f"{key} = {text} {unit}".rstrip())

    if spec is not None:
        lines += [
            "",
            "[experiment]",
            f"experiment = {spec.name}",
            f"sweep = {', '.join(repr(v) for v in spec.sweep)} {SWEEP_AXES[spec.name][1]}".rstrip(),
            f"designs = {', '.join(spec.designs)}",
            f"trials = {spec.trials}",
            f"output = {spec.output_dir}",
            f"threads = {spec.threads}",
        ]
    return "\n".join(lines) + "\n"


class ScenarioSettingsManager:
    """
    JSON export/import of the effective configuration next to experiment outputs.
    """

    def __init__(self, settings_file: str = "scenario.json"):
        self.settings_file = Path(settings_file)

    def save_settings(self, cfg: ScenarioConfig, spec: ExperimentSpec) -> Path:
        settings_dict = {
            "scenario": asdict(cfg),
            "experiment": asdict(spec)
        }
        self.settings_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.settings_file, 'w') as f:
            json.dump(settings_dict, f, indent=2)
        return self.settings_file

    def load_settings(self) -> Tuple[ScenarioConfig, ExperimentSpec]:
        if not self.settings_file.exists():
            raise ConfigurationError(f"settings file not found: {self.settings_file}")
        with open(self.settings_file, 'r') as f:
            settings = json.load(f)

        scenario_fields = {f.name for f in fields(ScenarioConfig)}
        experiment_fields = {f.name for f in fields(ExperimentSpec)}
        scenario = {k: tuple(v) if isinstance(v, list) else v
                    for k, v in settings.get("scenario", {}).items() if k in scenario_fields}
        experiment = {k: tuple(v) if isinstance(v, list) else v
                      for k, v in settings.get("experiment", {}).items() if k in experiment_fields}
        return ScenarioConfig(**scenario), ExperimentSpec(**experiment)
