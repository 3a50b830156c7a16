"""Experiment configuration: JSON schema, validation, and builders.

A single JSON document drives the CLI.  The schema below is normative;
unknown keys are rejected so typos fail loudly before any computation.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from .batch import FiniteSpaceModel
from .dynamics import (DuffingParams, DuffingTrajectories, FiniteChainStream,
                       FiniteIIDStream, StreamSpec, generate_stream)
from .errors import ConfigError, InputError
from .kernels import Kernel
from .learner import (ConstantBudget, ConstantStep, CubicBudget, LearnerConfig,
                      PolynomialStep, QuadraticBudget, ZeroBudget)

_KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"enum": ["gaussian", "linear"]},
        "bandwidth": {"type": "number", "exclusiveMinimum": 0},
        "bound": {"type": "number", "exclusiveMinimum": 0},
    },
}

_GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mins", "maxs", "counts"],
    "properties": {
        "mins": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "maxs": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 2},
                   "minItems": 2, "maxItems": 2},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cmestream experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["kernel", "learner", "stream"],
    "properties": {
        "kernel": _KERNEL_SCHEMA,
        "kernel_y": _KERNEL_SCHEMA,
        "learner": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambda", "step", "budget"],
            "properties": {
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "step": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["constant", "polynomial"]},
                        "eta": {"type": "number", "exclusiveMinimum": 0},
                        "eta0": {"type": "number", "exclusiveMinimum": 0},
                        "t0": {"type": "number", "exclusiveMinimum": 0},
                        "p": {"type": "number"},
                    },
                },
                "budget": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["zero", "constant", "quadratic", "cubic"]},
                        "eps": {"type": "number", "minimum": 0},
                        "b_cmp": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "jitter_scale": {"type": "number", "minimum": 0},
                "max_dictionary": {"type": ["integer", "null"], "minimum": 1},
                "budget_squared": {"type": "boolean"},
            },
        },
        "stream": {
            "type": "object",
            "additionalProperties": False,
            "required": ["source"],
            "properties": {
                "source": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["duffing", "finite_chain", "finite_iid", "csv"]},
                        "n_traj": {"type": "integer", "minimum": 1},
                        "steps_per_traj": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "init_box": {
                            "type": "array", "minItems": 2, "maxItems": 2,
                            "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                      "items": {"type": "number"}},
                        },
                        "params": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {
                                "delta": {"type": "number"},
                                "beta": {"type": "number"},
                                "alpha": {"type": "number"},
                                "dt_integrator": {"type": "number", "exclusiveMinimum": 0},
                                "sample_interval": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                        "model_path": {"type": "string"},
                        "n_samples": {"type": "integer", "minimum": 1},
                        "burn_in": {"type": "integer", "minimum": 0},
                        "path": {"type": "string"},
                        "dim_x": {"type": "integer", "minimum": 1},
                        "dim_y": {"type": "integer", "minimum": 1},
                    },
                },
                "interleave": {"enum": ["sequential", "round_robin"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "koopman_k": {"type": "integer", "minimum": 1},
                "grid": _GRID_SCHEMA,
                "fields": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "checkpoints": {"type": "array",
                                "items": {"type": "integer", "minimum": 1}},
                "oracle": {"enum": ["batch", "exact"]},
                "oracle_lambda": {"type": "number", "exclusiveMinimum": 0},
                "oracle_model": {"type": "string"},
            },
        },
    },
}

_SOURCE_KEYS = {
    "duffing": {"kind", "n_traj", "steps_per_traj", "seed", "init_box", "params"},
    "finite_chain": {"kind", "model_path", "n_samples", "burn_in", "seed"},
    "finite_iid": {"kind", "model_path", "n_samples", "seed"},
    "csv": {"kind", "path", "dim_x", "dim_y"},
}


def validate_config(data: dict):
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = err.json_path if err.json_path != "$" else "config root"
        raise ConfigError(f"invalid config at {where}: {err.message}")
    src = data["stream"]["source"]
    allowed = _SOURCE_KEYS[src["kind"]]
    extra = set(src) - allowed
    if extra:
        raise ConfigError(
            f"invalid config at $.stream.source: keys {sorted(extra)} do not "
            f"apply to source kind {src['kind']!r}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(data)
    return data


def build_kernel(d: dict) -> Kernel:
    if d["family"] == "gaussian":
        if "bandwidth" not in d:
            raise ConfigError("invalid config at $.kernel: gaussian needs 'bandwidth'")
        return Kernel.gaussian(d["bandwidth"])
    return Kernel.linear(d.get("bound", 1.0))


def build_learner_config(data: dict, budget_squared: Optional[bool] = None) -> LearnerConfig:
    kx = build_kernel(data["kernel"])
    ky = build_kernel(data.get("kernel_y", data["kernel"]))
    lrn = data["learner"]
    step = lrn["step"]
    if step["kind"] == "constant":
        if "eta" not in step:
            raise ConfigError("invalid config at $.learner.step: constant needs 'eta'")
        sched = ConstantStep(eta=step["eta"])
    else:
        if "eta0" not in step:
            raise ConfigError("invalid config at $.learner.step: polynomial needs 'eta0'")
        sched = PolynomialStep(eta0=step["eta0"], t0=step.get("t0", 1.0),
                               p=step.get("p", 1.0))
    bud = lrn["budget"]
    if bud["kind"] == "zero":
        budget = ZeroBudget()
    elif bud["kind"] == "constant":
        if "eps" not in bud:
            raise ConfigError("invalid config at $.learner.budget: constant needs 'eps'")
        budget = ConstantBudget(eps=bud["eps"])
    elif bud["kind"] == "quadratic":
        if "b_cmp" not in bud:
            raise ConfigError("invalid config at $.learner.budget: quadratic needs 'b_cmp'")
        budget = QuadraticBudget(b_cmp=bud["b_cmp"])
    else:
        if "b_cmp" not in bud:
            raise ConfigError("invalid config at $.learner.budget: cubic needs 'b_cmp'")
        budget = CubicBudget(b_cmp=bud["b_cmp"])
    squared = lrn.get("budget_squared", False) if budget_squared is None else budget_squared
    return LearnerConfig(
        lam=lrn["lambda"],
        step_schedule=sched,
        budget_schedule=budget,
        kernel_x=kx,
        kernel_y=ky,
        jitter_scale=lrn.get("jitter_scale", 1e-10),
        max_dictionary=lrn.get("max_dictionary"),
        budget_squared=squared,
    )


def read_stream_csv(path, dim_x: int, dim_y: int):
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape[1] != dim_x + dim_y:
        raise InputError(
            f"stream CSV has {rows.shape[1]} columns, expected {dim_x + dim_y}")
    return rows[:, :dim_x], rows[:, dim_x:]


def write_stream_csv(path, xs: np.ndarray, ys: np.ndarray):
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(",".join(repr(float(v)) for v in list(x) + list(y)) + "\n")


def build_stream(data: dict, base_dir: str = ".", seed: Optional[int] = None):
    """Materialize the configured stream as ``(xs, ys)`` arrays."""
    section = data["stream"]
    src = section["source"]
    interleave = section.get("interleave", "sequential")
    kind = src["kind"]
    if kind == "csv":
        for key in ("path", "dim_x", "dim_y"):
            if key not in src:
                raise ConfigError(f"invalid config at $.stream.source: csv needs {key!r}")
        return read_stream_csv(os.path.join(base_dir, src["path"]),
                               src["dim_x"], src["dim_y"])
    use_seed = seed if seed is not None else src.get("seed")
    if use_seed is None:
        raise ConfigError("invalid config at $.stream.source.seed: a seed is required")
    if kind == "duffing":
        for key in ("n_traj", "steps_per_traj"):
            if key not in src:
                raise ConfigError(f"invalid config at $.stream.source: duffing needs {key!r}")
        params = DuffingParams(**src.get("params", {}))
        source = DuffingTrajectories(
            n_traj=src["n_traj"], steps_per_traj=src["steps_per_traj"],
            seed=use_seed,
            init_box=tuple(tuple(b) for b in src.get("init_box", [[-2, 2], [-2, 2]])),
            params=params)
    else:
        if "model_path" not in src or "n_samples" not in src:
            raise ConfigError(
                f"invalid config at $.stream.source: {kind} needs 'model_path' and 'n_samples'")
        model = FiniteSpaceModel.load(os.path.join(base_dir, src["model_path"]))
        if kind == "finite_chain":
            source = FiniteChainStream(model=model, n_samples=src["n_samples"],
                                       burn_in=src.get("burn_in", 0), seed=use_seed)
        else:
            source = FiniteIIDStream(model=model, n_samples=src["n_samples"],
                                     seed=use_seed)
    return generate_stream(StreamSpec(source=source, interleave=interleave))
