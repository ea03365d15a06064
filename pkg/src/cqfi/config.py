"""Experiment configuration: TOML file -> validated, defaulted dataclasses."""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigInvalid

EXPERIMENTS = ("driven_qubit", "field_sensing", "gaussian_force")
OBSERVABLES = ("H_RWA", "sigma_x", "sigma_y", "sigma_z")
MAX_GRID_POINTS = 10**7


@dataclass(frozen=True)
class GridConfig:
    dt: float
    t_final: float = 100.0


@dataclass(frozen=True)
class EnsembleConfig:
    n_trajs: int = 5000
    master_seed: int = 20251019
    batch_size: int = 5000


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/latest"
    formats: tuple[str, ...] = ("csv", "json")
    dump_trajectories: bool = False
    max_dumped: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: dict[str, Any]
    grid: GridConfig | None
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["output"]["formats"] = list(self.output.formats)
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


MODEL_DEFAULTS: dict[str, dict[str, Any]] = {
    "driven_qubit": {
        "omega": 1.0, "epsilon": 0.1, "gamma0": 0.05, "nbar": 0.5, "observable": "H_RWA",
    },
    "field_sensing": {
        "delta": 1.0, "beta": 1.0, "theta_min": -2.0, "theta_max": 2.0, "n_theta": 41,
    },
    "gaussian_force": {
        "vx": 0.5, "vp": 0.5, "vxp": 0.0, "mean_x": 0.0, "mean_p": 0.0,
        "omega": 1.0, "force": 0.0, "strength": 1.0, "alphas": [-2.0, 0.0, 2.0],
    },
}


def _take(section: dict, key: str, kind, path: str, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigInvalid(path, "missing required field")
        return default
    val = section[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigInvalid(path, f"expected a finite number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigInvalid(path, f"expected an integer, got {val!r}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigInvalid(path, f"expected true/false, got {val!r}")
        return val
    if not isinstance(val, kind):
        raise ConfigInvalid(path, f"expected {kind.__name__}, got {val!r}")
    return val


def _reject_unknown(section: dict, allowed, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigInvalid(f"{prefix}{key}", "unknown key")


def _section(raw: dict, name: str, required: bool = False) -> dict:
    if name not in raw:
        if required:
            raise ConfigInvalid(name, "missing required section")
        return {}
    sec = raw[name]
    if not isinstance(sec, dict):
        raise ConfigInvalid(name, "expected a table")
    return sec


def _model(experiment: str, sec: dict) -> dict[str, Any]:
    defaults = MODEL_DEFAULTS[experiment]
    allowed = set(defaults) | ({"temperature"} if experiment == "driven_qubit" else set())
    _reject_unknown(sec, allowed, "model.")
    out: dict[str, Any] = {}
    for key, dflt in defaults.items():
        path = f"model.{key}"
        if isinstance(dflt, str):
            out[key] = _take(sec, key, str, path, dflt)
        elif isinstance(dflt, list):
            vals = _take(sec, key, list, path, dflt)
            out[key] = [_take({"v": v}, "v", float, path) for v in vals]
        elif isinstance(dflt, int) and not isinstance(dflt, bool) and key.startswith("n_"):
            out[key] = _take(sec, key, int, path, dflt)
        else:
            out[key] = _take(sec, key, float, path, dflt)

    if experiment == "driven_qubit":
        if "temperature" in sec:
            if "nbar" in sec:
                raise ConfigInvalid("model.temperature", "give either temperature or nbar, not both")
            temp = _take(sec, "temperature", float, "model.temperature")
            if temp < 0:
                raise ConfigInvalid("model.temperature", "must be non-negative")
            out["nbar"] = 0.0 if temp == 0 else 1.0 / math.expm1(out["omega"] / temp)
        for key in ("omega", "epsilon"):
            if out[key] <= 0:
                raise ConfigInvalid(f"model.{key}", "must be positive")
        if out["gamma0"] < 0:
            raise ConfigInvalid("model.gamma0", "must be non-negative")
        if out["nbar"] < 0:
            raise ConfigInvalid("model.nbar", "must be non-negative")
        if out["epsilon"] / out["omega"] > 0.2:
            raise ConfigInvalid("model.epsilon", "weak-drive regime requires epsilon/omega <= 0.2")
        if out["observable"] not in OBSERVABLES:
            raise ConfigInvalid("model.observable", f"must be one of {OBSERVABLES}")
    elif experiment == "field_sensing":
        if out["beta"] < 0:
            raise ConfigInvalid("model.beta", "must be non-negative")
        if out["n_theta"] < 1:
            raise ConfigInvalid("model.n_theta", "must be >= 1")
        if out["theta_max"] < out["theta_min"]:
            raise ConfigInvalid("model.theta_max", "must be >= theta_min")
    else:
        if out["vx"] <= 0 or out["vp"] <= 0:
            raise ConfigInvalid("model.vx", "variances must be positive")
        if out["vx"] * out["vp"] - out["vxp"] ** 2 < 0.25 - 1e-12:
            raise ConfigInvalid("model.vxp", "covariance violates det V >= 1/4")
        if out["strength"] <= 0:
            raise ConfigInvalid("model.strength", "must be positive")
    return out


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping (already parsed from TOML)."""
    _reject_unknown(raw, {"experiment", "model", "grid", "ensemble", "output"}, "")
    experiment = _take(raw, "experiment", str, "experiment", required=True)
    if experiment not in EXPERIMENTS:
        raise ConfigInvalid("experiment", f"must be one of {EXPERIMENTS}")
    model = _model(experiment, _section(raw, "model"))

    grid_sec = _section(raw, "grid", required=experiment != "field_sensing")
    grid = None
    if grid_sec or experiment != "field_sensing":
        _reject_unknown(grid_sec, {"dt", "t_final"}, "grid.")
        dt = _take(grid_sec, "dt", float, "grid.dt", required=True)
        if dt <= 0:
            raise ConfigInvalid("grid.dt", "must be positive")
        t_final = _take(grid_sec, "t_final", float, "grid.t_final", GridConfig.t_final)
        if t_final <= 0:
            raise ConfigInvalid("grid.t_final", "must be positive")
        if t_final / dt > MAX_GRID_POINTS:
            raise ConfigInvalid("grid.t_final", f"t_final/dt exceeds {MAX_GRID_POINTS}")
        grid = GridConfig(dt, t_final)

    ens_sec = _section(raw, "ensemble")
    _reject_unknown(ens_sec, {"n_trajs", "master_seed", "batch_size"}, "ensemble.")
    ens = EnsembleConfig(
        n_trajs=_take(ens_sec, "n_trajs", int, "ensemble.n_trajs", EnsembleConfig.n_trajs),
        master_seed=_take(ens_sec, "master_seed", int, "ensemble.master_seed", EnsembleConfig.master_seed),
        batch_size=_take(ens_sec, "batch_size", int, "ensemble.batch_size", EnsembleConfig.batch_size),
    )
    if ens.n_trajs < 1:
        raise ConfigInvalid("ensemble.n_trajs", "must be >= 1")
    if ens.batch_size < 1:
        raise ConfigInvalid("ensemble.batch_size", "must be >= 1")
    if not 0 <= ens.master_seed < 2**64:
        raise ConfigInvalid("ensemble.master_seed", "must be a 64-bit unsigned integer")

    out_sec = _section(raw, "output")
    _reject_unknown(out_sec, {"directory", "formats", "dump_trajectories", "max_dumped"}, "output.")
    formats = tuple(_take(out_sec, "formats", list, "output.formats", list(OutputConfig.formats)))
    if not formats or any(f not in ("csv", "json") for f in formats):
        raise ConfigInvalid("output.formats", "must be a non-empty subset of ['csv', 'json']")
    output = OutputConfig(
        directory=_take(out_sec, "directory", str, "output.directory", OutputConfig.directory),
        formats=formats,
        dump_trajectories=_take(out_sec, "dump_trajectories", bool, "output.dump_trajectories", False),
        max_dumped=_take(out_sec, "max_dumped", int, "output.max_dumped", OutputConfig.max_dumped),
    )
    if output.max_dumped < 0:
        raise ConfigInvalid("output.max_dumped", "must be >= 0")
    return ExperimentConfig(experiment, model, grid, ens, output)


def validate_config(path: str | Path) -> ExperimentConfig:
    """Read, default and bounds-check a TOML experiment file."""
    p = Path(path)
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid("<file>", f"cannot read {p}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid("<file>", f"invalid TOML: {exc}") from exc
    return parse_config(raw)


def with_overrides(cfg: ExperimentConfig, *, seed=None, n_trajs=None, out=None) -> ExperimentConfig:
    raw = cfg.to_dict()
    if raw["grid"] is None:
        raw.pop("grid")
    if seed is not None:
        raw["ensemble"]["master_seed"] = seed
    if n_trajs is not None:
        raw["ensemble"]["n_trajs"] = n_trajs
    if out is not None:
        raw["output"]["directory"] = str(out)
    return parse_config(raw)
