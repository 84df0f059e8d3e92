"""Experiment configuration: a flat, diffable key-value file plus overrides.

Configs are TOML files restricted to flat scalar/list values, e.g.

    experiment = "esn_approx"
    n_grid = [400, 1600, 6400]
    seeds = 5
    ridge = 1e-8

Command-line ``--set key=value`` pairs override file values and the resolved
config is what gets hashed and stored. Unknown keys are rejected by name.

Two hashes are derived: ``config_hash`` identifies the fully resolved config
(for record identity), while ``seed_base`` hashes only the non-grid
parameters. Per-cell seeds come from seed_base plus the cell coordinates, so
editing the grid (adding or removing cells) never changes the random stream
of any other cell.
"""

from __future__ import annotations

import hashlib
import json
import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional


@dataclass(frozen=True)
class Param:
    type: type
    default: Any = None
    required: bool = False
    grid: bool = False  # grid axes are excluded from the seed base


_COMMON = {
    "seed": Param(int, 0),
    "workers": Param(int, 1),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "reconstruction": {
        **_COMMON,
        "md_grid": Param(list, [1, 2, 4, 6], grid=True),
        "draws": Param(int, 10_000_000),
        "x_count": Param(int, 10),
        "x_radius": Param(float, 2.0),
    },
    "deviation": {
        **_COMMON,
        "trials": Param(int, 500, grid=True),
        "n": Param(int, 1000),
        "d": Param(int, 1),
        "g_bound": Param(float, 1.0),
        "g_id": Param(str, "const"),
        "r": Param(float, 1.0),
        "delta": Param(float, 0.1),
        "grid_points": Param(int, 0),
    },
    "esn_approx": {
        **_COMMON,
        "operator": Param(str, "exp_filter:lambda=0.5"),
        "m": Param(int, 4),
        "d": Param(int, 1),
        "truncate_to_m": Param(bool, True),
        "n_grid": Param(list, None, required=True, grid=True),
        "seeds": Param(int, 5, grid=True),
        "ridge": Param(float, 1e-8),
        "train_steps": Param(int, 5000),
        "test_sequences": Param(int, 8),
        "test_length": Param(int, 250),
        "warmup": Param(int, -1),
        "adversarial": Param(bool, True),
        "delta": Param(float, 0.05),
        "b_m": Param(float, 1.0),
    },
    "fixed_point": {
        **_COMMON,
        "n": Param(int, 4000),
        "m": Param(int, 2),
        "d": Param(int, 1),
        "windows": Param(int, 20, grid=True),
        "window_length": Param(int, 50),
        "tol": Param(float, 1e-10),
        "max_iters": Param(int, 100),
    },
    "weak_esp": {
        **_COMMON,
        "n": Param(int, 4000),
        "m": Param(int, 2),
        "d": Param(int, 1),
        "operator": Param(str, "exp_filter:lambda=0.5"),
        "truncate_to_m": Param(bool, True),
        "ridge": Param(float, 1e-8),
        "train_steps": Param(int, 5000),
        "steps": Param(int, 50),
        "threshold_factor": Param(float, 2.0),
    },
    "fourier_verify": {
        **_COMMON,
        "profile": Param(str, "bump:scale=1"),
        "mc_samples": Param(int, 1_000_000),
        "grid_points": Param(int, 11),
        "invariant_samples": Param(int, 1_000_000),
    },
    "budget_table": {
        **_COMMON,
        "m_grid": Param(list, [1, 2, 4], grid=True),
        "d_grid": Param(list, [1], grid=True),
        "delta": Param(float, 0.05),
        "b_m": Param(float, 1.0),
        "operator": Param(str, ""),
        "n_grid": Param(list, None, required=True, grid=True),
    },
}


class ConfigError(ValueError):
    """Config parsing or validation failure (exit code 1)."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict
    output_dir: Path

    def canonical(self) -> str:
        return json.dumps(
            {"experiment": self.experiment, "params": _jsonable(self.params)},
            sort_keys=True,
        )

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @property
    def seed_base(self) -> str:
        schema = SCHEMAS[self.experiment]
        stable = {k: v for k, v in self.params.items() if not schema[k].grid and k != "workers"}
        blob = json.dumps({"experiment": self.experiment, "params": _jsonable(stable)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        return repr(value)  # exact decimal repr, round-trips
    return value


def _coerce(key: str, value, spec: Param):
    try:
        if spec.type is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
            raise ValueError(f"expected a boolean, got {value!r}")
        if spec.type is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            if not isinstance(value, (list, tuple)):
                raise ValueError("expected a list")
            return [int(v) if float(v) == int(float(v)) else float(v) for v in value]
        if spec.type is int:
            if isinstance(value, str):
                value = float(value)
            if isinstance(value, float) and value != int(value):
                raise ValueError("expected an integer")
            return int(value)
        return spec.type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r}: {exc}") from exc


def resolve_config(
    experiment: str,
    raw_params: dict,
    output_dir: Optional[Path] = None,
    overrides: Optional[dict] = None,
) -> ExperimentConfig:
    if experiment not in SCHEMAS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; known: {', '.join(sorted(SCHEMAS))}"
        )
    schema = SCHEMAS[experiment]
    merged = dict(raw_params)
    for key, value in (overrides or {}).items():
        merged[key] = value  # flags win over file values
    params = {}
    for key, value in merged.items():
        if key not in schema:
            raise ConfigError(f"unknown parameter {key!r} for experiment {experiment!r}")
        params[key] = _coerce(key, value, schema[key])
    for key, spec in schema.items():
        if key not in params:
            if spec.required:
                raise ConfigError(f"missing required parameter {key!r}")
            params[key] = spec.default
    _validate(experiment, params)
    return ExperimentConfig(
        experiment=experiment,
        params=params,
        output_dir=Path(output_dir) if output_dir else Path("."),
    )


def _validate(experiment: str, params: dict) -> None:
    for key in ("n_grid", "md_grid", "m_grid", "d_grid"):
        grid = params.get(key)
        if grid is not None:
            if len(grid) == 0:
                raise ConfigError(f"{key} must be non-empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{key} not increasing: {grid}")
    for key in ("delta",):
        if key in params and not 0.0 < params[key] < 1.0:
            raise ConfigError(f"{key} must lie in (0, 1)")
    for key in ("n", "m", "d", "draws", "trials", "windows", "train_steps", "mc_samples"):
        if key in params and params[key] is not None and params[key] < 1:
            raise ConfigError(f"{key} must be >= 1")


def parse_config(
    path, overrides: Optional[dict] = None, output_dir: Optional[Path] = None
) -> ExperimentConfig:
    """Load a TOML config file, apply overrides, validate against the schema."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    experiment = raw.pop("experiment", None)
    if experiment is None:
        raise ConfigError("config must set experiment = \"...\"")
    file_out = raw.pop("output_dir", None)
    out = output_dir or file_out
    return resolve_config(str(experiment), raw, output_dir=out, overrides=overrides)


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out
