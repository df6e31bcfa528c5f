"""YAML experiment configuration.

A config file holds the model description at the top level and the
experiment parameters under ``params``::

    m: 2
    distortions: [1.0, 0.5]
    drift:
      kind: linear_exchange      # or: tabulated, with ``table: ["x2 - x1", ...]``
      S: [[0, 1], [1, 0]]
    tolerances:
      grid_resolution: 20
    seed: 12345
    params:
      x0: [0.3, 0.6]
      t: 0.5
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .model import LinearExchange, ModelSpec, Tabulated, make_model

EXPERIMENTS = ("validate", "simulate-chain", "simulate-sde", "generator-check", "semigroup-check",
               "trotter-check", "absorption", "bound-check", "hitting-time", "stopping-check")

# parameters each experiment cannot run without
REQUIRED = {
    "validate": (),
    "simulate-chain": ("x0", "N"),
    "simulate-sde": ("x0",),
    "generator-check": ("f", "N"),
    "semigroup-check": ("f", "x0", "t"),
    "trotter-check": ("f", "t", "n_steps"),
    "absorption": ("x0", "t_max"),
    "bound-check": ("x0", "alpha"),
    "hitting-time": ("x0", "alpha"),
    "stopping-check": ("x0", "alpha"),
}

DEFAULT_SEED = 20240601


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    params: dict = field(default_factory=dict)
    master_seed: int = DEFAULT_SEED
    reps: int | None = None
    out: Path = Path(".")
    source: str | None = None

    def param(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def echo(self) -> dict:
        return {"experiment": self.experiment, "model": self.model, "params": self.params,
                "master_seed": self.master_seed, "reps": self.reps, "source": self.source}


def _drift_from(raw: dict, m: int):
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigurationError("drift needs a 'kind'")
    kind = str(raw["kind"]).lower().replace("-", "_")
    if kind in ("linear_exchange", "linear", "linearexchange"):
        if "S" not in raw:
            raise ConfigurationError("linear_exchange drift needs a matrix 'S'")
        return LinearExchange(raw["S"])
    if kind == "tabulated":
        table = raw.get("table")
        if not isinstance(table, (list, tuple)) or len(table) != m:
            raise ConfigurationError(f"tabulated drift needs a 'table' of {m} expressions")
        return Tabulated(tuple(str(e) for e in table))
    raise ConfigurationError(f"unknown drift kind {raw['kind']!r}")


def build_model(model: dict, validate: bool = True) -> ModelSpec:
    """ModelSpec from the model part of a config."""
    try:
        m = int(model["m"])
        d = [float(v) for v in model["distortions"]]
        drift_raw = model["drift"]
    except KeyError as exc:
        raise ConfigurationError(f"model is missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed model: {exc}") from None
    if len(d) != m:
        raise ConfigurationError(f"m = {m} but {len(d)} distortions given")
    tol = model.get("tolerances") or {}
    try:
        drift = _drift_from(drift_raw, m)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    return make_model(d, drift, grid_resolution=int(tol.get("grid_resolution", 20)), validate=validate)


def grid_resolution(model: dict) -> int:
    return int((model.get("tolerances") or {}).get("grid_resolution", 20))


def load_config(path, experiment: str, *, seed: int | None = None, reps: int | None = None,
                out=None) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    return from_mapping(raw, experiment, seed=seed, reps=reps, out=out, source=str(path))


def from_mapping(raw: Any, experiment: str, *, seed: int | None = None, reps: int | None = None,
                 out=None, source: str | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")
    model = {k: raw[k] for k in ("m", "distortions", "drift", "tolerances") if k in raw}
    params = dict(raw.get("params") or {})
    # experiment-specific overrides: params: {bound-check: {alpha: 1.0}}
    own = params.pop(experiment, None)
    for name in EXPERIMENTS:
        params.pop(name, None)
    if isinstance(own, dict):
        params.update(own)
    missing = [k for k in REQUIRED[experiment] if params.get(k) is None]
    if missing:
        raise ConfigurationError(f"{experiment} needs parameter(s): {', '.join(missing)}")
    master_seed = int(seed if seed is not None else raw.get("seed", DEFAULT_SEED))
    if master_seed < 0:
        raise ConfigurationError("seed must be non-negative")
    reps = reps if reps is not None else params.get("reps")
    if reps is not None and int(reps) < 1:
        raise ConfigurationError("reps must be positive")
    return ExperimentConfig(experiment, model, params, master_seed,
                            None if reps is None else int(reps),
                            Path(out) if out is not None else Path(raw.get("out", ".")), source)


def bundled_example() -> Path:
    """Path of the two-patch example config shipped with the package."""
    return Path(__file__).with_name("data") / "two_patch.yaml"
