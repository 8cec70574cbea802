"""Strict JSON experiment configuration.

Every section is validated before any compute starts; unknown keys and
missing required keys raise :class:`ConfigurationError` naming the key path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec
from .errors import ConfigurationError
from .gan import GanConfig
from .solvers import ODE_METHODS
from .temporal import TemporalGeneratorSpec

REQUIRED = object()

TEMPORAL_KEYS = {
    "family": REQUIRED,
    "latent_dim": REQUIRED,
    "num_frames": REQUIRED,
    "seed": REQUIRED,
    "order": 1,
    "fx_shape": "single_layer",
    "prepend_fcn_depth": 0,
    "param_budget": None,
}
GAN_KEYS = {
    "total_steps": REQUIRED,
    "metric_interval": REQUIRED,
    "seeds": REQUIRED,
    "phi": "bce",
    "batch_size": 16,
    "g_width": 64,
    "d_width": 8,
    "eval_samples": 160,
    "final_eval_samples": 320,
}
SEED_KEYS = {"params": REQUIRED, "data": REQUIRED, "noise": REQUIRED}
DATASET_KEYS = {
    "kind": REQUIRED,
    "seed": REQUIRED,
    "num_classes": 2,
    "height": 16,
    "width": 16,
    "samples_per_class": 64,
}
SOLVER_KEYS = {"method": "rk4", "steps_per_unit": 4, "sde_steps_per_unit": 8}
TOP_KEYS = {"temporal": REQUIRED, "gan": REQUIRED, "dataset": REQUIRED, "solver": {}, "output_dir": REQUIRED}

INT_KEYS = {
    "latent_dim", "num_frames", "seed", "order", "prepend_fcn_depth", "param_budget", "total_steps",
    "metric_interval", "batch_size", "g_width", "d_width", "eval_samples", "final_eval_samples",
    "params", "data", "noise", "num_classes", "height", "width", "samples_per_class", "steps_per_unit",
    "sde_steps_per_unit",
}


def _section(raw, schema, path):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path or 'config'} must be a JSON object", path)
    for key in raw:
        if key not in schema:
            full = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown key {full!r}", full)
    out = {}
    for key, default in schema.items():
        full = f"{path}.{key}" if path else key
        if key in raw:
            val = raw[key]
            if key in INT_KEYS and val is not None and (isinstance(val, bool) or not isinstance(val, int)):
                raise ConfigurationError(f"{full!r} must be an integer", full)
            out[key] = val
        elif default is REQUIRED:
            raise ConfigurationError(f"missing required key {full!r}", full)
        else:
            out[key] = default
    return out


@dataclass
class SolverSettings:
    method: str = "rk4"
    steps_per_unit: int = 4
    sde_steps_per_unit: int = 8

    def generator_kwargs(self):
        return dict(
            ode_method=self.method,
            ode_steps_per_unit=self.steps_per_unit,
            sde_steps_per_unit=self.sde_steps_per_unit,
        )


@dataclass
class ExperimentConfig:
    temporal: TemporalGeneratorSpec
    gan: GanConfig
    dataset: SyntheticSpec
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_dir: str = "runs"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, raw):
        top = _section(raw, TOP_KEYS, "")
        t = _section(top["temporal"], TEMPORAL_KEYS, "temporal")
        g = _section(top["gan"], GAN_KEYS, "gan")
        seeds = _section(g.pop("seeds"), SEED_KEYS, "gan.seeds")
        ds = _section(top["dataset"], DATASET_KEYS, "dataset")
        sv = _section(top["solver"], SOLVER_KEYS, "solver")
        if sv["method"] not in ODE_METHODS:
            raise ConfigurationError(f"solver.method must be one of {ODE_METHODS}", "solver.method")
        for key in ("steps_per_unit", "sde_steps_per_unit"):
            if sv[key] < 1:
                raise ConfigurationError(f"solver.{key} must be >= 1", f"solver.{key}")
        if not isinstance(top["output_dir"], str):
            raise ConfigurationError("'output_dir' must be a string", "output_dir")
        temporal = _build(TemporalGeneratorSpec, t, "temporal")
        gan = _build(
            GanConfig,
            dict(g, param_seed=seeds["params"], data_seed=seeds["data"], noise_seed=seeds["noise"]),
            "gan",
        )
        dataset = _build(SyntheticSpec, dict(ds, num_frames=temporal.num_frames), "dataset")
        return cls(temporal, gan, dataset, SolverSettings(**sv), top["output_dir"], raw)

    @classmethod
    def load(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        key = f"{path}.{exc.key}" if exc.key else path
        raise ConfigurationError(f"{key}: {exc}", key) from exc
