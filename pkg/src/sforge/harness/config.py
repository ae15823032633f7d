"""Experiment configuration: one flat JSON document plus CLI overrides.

Resolution order, lowest to highest precedence: built-in defaults, the
recipe's own defaults, the JSON file, command-line flags.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from typing import Any

EXPERIMENTS = (
    "gaussian", "spaceship", "nonsparse_sweep", "diffusion", "logistic",
    "bounds_table1", "bounds_table2", "mdep_decay",
)
METHODS = ("svgd", "mp_svgd", "aump_svgd")


class ConfigError(ValueError):
    """Raised for any invalid configuration; the CLI maps it to exit code 2."""


@dataclass
class ExperimentConfig:
    experiment: str = "gaussian"
    methods: list[str] = field(default_factory=lambda: ["svgd", "aump_svgd"])
    dims: list[int] = field(default_factory=lambda: [10])
    particles: list[int] = field(default_factory=lambda: [100])
    iterations: int = 2000
    r: list[int] = field(default_factory=lambda: [3])
    bands: list[int] = field(default_factory=lambda: [1])
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    step_mode: str = "adagrad"
    step: float = 1.0
    fudge: float = 1e-6
    kernel: str = "rbf"
    bandwidth: float | None = None
    init_mean: float = 10.0
    init_sd: float = 1.0
    snapshot_every: int = 100
    sequential: bool = False
    refresh_stage2: bool = True
    centered_partition: bool = True
    reference_samples: int = 1000
    rho: float = 0.5
    spaceship_rho: list[float] = field(default_factory=lambda: [0.9, 0.5])
    sigma: float = 0.1
    n_obs: int = 50
    n_data: int = 2000
    data_seed: int = 0
    prior_var: float = 1.0
    dataset: str | None = None
    alpha: float | None = None
    gaps: list[int] | None = None
    timing: bool = False
    out: str = "sforge_out"

    # -- construction ------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        if "method" in data and "methods" not in data:
            data["methods"] = data.pop("method")
        exp = data.get("experiment", cls.experiment)
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(RECIPE_DEFAULTS.get(exp, {}))
        merged.update(data)
        merged["experiment"] = exp
        try:
            cfg = cls(**{k: _coerce(k, v) for k, v in merged.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list contains duplicates")
        for name in ("dims", "particles"):
            vals = getattr(self, name)
            if not vals or any(v < 1 for v in vals):
                raise ConfigError(f"{name} must be a non-empty list of positive integers")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if any(v < 1 for v in self.r):
            raise ConfigError("r values must be positive")
        if any(b < 0 for b in self.bands):
            raise ConfigError("bands must be non-negative")
        if self.step_mode not in ("adagrad", "fixed"):
            raise ConfigError(f"unknown step mode {self.step_mode!r}")
        if not self.step > 0 or not self.fudge > 0:
            raise ConfigError("step and fudge must be positive")
        if self.kernel not in ("rbf", "imq"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        for name in ("init_sd", "sigma", "prior_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("snapshot_every", "reference_samples", "n_obs", "n_data"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.gaps is not None and any(g < 1 for g in self.gaps):
            raise ConfigError("gaps must be positive")
        if "aump_svgd" in self.methods:
            for D in self.dims:
                for r in self.r:
                    if r > D - 1:
                        raise ConfigError(f"r={r} is too large for dimension {D}")
        if self.experiment == "nonsparse_sweep":
            for D in self.dims:
                for b in self.bands:
                    if b > D - 1:
                        raise ConfigError(f"band {b} is too large for dimension {D}")
        if self.experiment == "bounds_table2" and any(D < 2 for D in self.dims):
            raise ConfigError("the covariance bound needs dims >= 2")


LIST_INT = {"dims", "particles", "r", "bands", "seeds", "gaps"}
LIST_FLOAT = {"spaceship_rho"}
LIST_STR = {"methods"}
BOOLS = {"sequential", "refresh_stage2", "centered_partition", "timing"}
INTS = {"iterations", "snapshot_every", "reference_samples", "n_obs", "n_data", "data_seed"}
FLOATS = {"step", "fudge", "init_mean", "init_sd", "rho", "sigma", "prior_var"}
OPT_FLOATS = {"bandwidth", "alpha"}


def _coerce(key: str, value):
    if key in LIST_INT:
        if value is None and key == "gaps":
            return None
        return parse_int_list(value, key)
    if key in LIST_FLOAT:
        vals = value.split(",") if isinstance(value, str) else list(value)
        return [float(v) for v in vals]
    if key in LIST_STR:
        vals = value.split(",") if isinstance(value, str) else list(value)
        return [str(v).strip().lower().replace("-", "_") for v in vals]
    if key in BOOLS:
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"{key} must be a boolean")
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if key in INTS:
        return _int(value, key)
    if key in FLOATS:
        return _float(value, key)
    if key in OPT_FLOATS:
        if value is None or (isinstance(value, str) and value.lower() in ("", "none", "median")):
            return None
        return _float(value, key)
    if key in ("kernel", "step_mode", "experiment"):
        return str(value).lower()
    return value


def _int(value, key) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer")
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    if not f.is_integer():
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(f)


def _float(value, key) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_int_list(value, key: str = "list") -> list[int]:
    """Accept ``[1, 2]``, ``3``, ``"1,2,5"`` or an inclusive range ``"0..9"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [_int(value, key)]
    if isinstance(value, str):
        out: list[int] = []
        for part in value.split(","):
            if not part.strip():
                continue
            mt = _RANGE.match(part)
            if mt:
                lo, hi = int(mt.group(1)), int(mt.group(2))
                if hi < lo:
                    raise ConfigError(f"empty range {part!r} in {key}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(_int(part.strip(), key))
        return out
    if isinstance(value, (list, tuple)):
        return [_int(v, key) for v in value]
    raise ConfigError(f"{key} must be a list of integers")


# Per-recipe defaults, overridden by anything the user supplies.
RECIPE_DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian": {"methods": ["svgd", "aump_svgd"], "dims": [10, 20, 50], "r": [3]},
    "spaceship": {"methods": ["svgd", "aump_svgd"], "dims": [10, 20, 50], "r": [3]},
    "nonsparse_sweep": {
        "methods": ["mp_svgd", "aump_svgd"], "dims": [50], "r": [3],
        "bands": [1, 5, 15, 35, 49], "seeds": [0, 1, 2],
    },
    "diffusion": {
        "methods": ["svgd", "aump_svgd"], "dims": [50], "r": [5, 10], "iterations": 1000,
        "seeds": [0, 1, 2, 3, 4], "step": 0.1, "init_mean": 0.0, "init_sd": 0.1,
        "snapshot_every": 1000,
    },
    "logistic": {
        "methods": ["svgd", "aump_svgd"], "dims": [20], "particles": [100, 300], "r": [3],
        "iterations": 1000, "seeds": [0, 1, 2], "step": 0.05, "init_mean": 0.0,
        "init_sd": 1.0, "snapshot_every": 1000,
    },
    "bounds_table1": {
        "methods": ["svgd"], "dims": [2, 5, 10, 15, 20, 25], "particles": [10, 50],
        "iterations": 3000, "bandwidth": 0.3, "r": [1], "snapshot_every": 3000,
    },
    "bounds_table2": {
        "methods": ["svgd"], "dims": [2, 5], "particles": [1000, 5000], "iterations": 100,
        "bandwidth": 0.3, "step_mode": "fixed", "step": 0.5, "init_mean": 0.0, "r": [1],
        "snapshot_every": 100,
    },
    "mdep_decay": {
        "methods": ["svgd"], "dims": [10], "particles": [3000], "iterations": 200,
        "step_mode": "fixed", "step": 0.5, "init_mean": 0.0, "r": [1], "seeds": [0],
        "gaps": [500, 1000, 1500, 2000], "snapshot_every": 200,
    },
}
