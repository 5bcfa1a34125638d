"""Experiment configuration: JSON schema, validation and object builders."""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema
import numpy as np

from .env import (
    MultiTaskEnvironment,
    ProductEnvironment,
    discrete_grid_env,
    normal_signal_env,
    quantile_atoms,
    uniform_z_env,
)
from .errors import ConfigError
from .monitoring import MonitoringCostSpec
from .utility import utility_from_config

TASKS = ("solve-single", "scale-sweep", "group-index", "multitask-sweep", "random-channel", "verify")

_number_or_list = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}
_scalar_model = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["uniform", "normal", "discrete"]},
        "lo": {"type": "number"},
        "hi": {"type": "number"},
        "sigma2": {"type": "number", "exclusiveMinimum": 0},
        "z": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "p": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "atoms": {"type": "integer", "minimum": 2},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "uniform"}}}, "then": {"required": ["lo", "hi"]}},
        {"if": {"properties": {"kind": {"const": "normal"}}}, "then": {"required": ["sigma2"]}},
        {"if": {"properties": {"kind": {"const": "discrete"}}}, "then": {"required": ["z", "p"]}},
    ],
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "utility", "cost", "solver", "output"],
    "properties": {
        "task": {"enum": list(TASKS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "normal", "discrete", "product", "multitask"]},
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "sigma2": {"type": "number", "exclusiveMinimum": 0},
                "z": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "p": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "atoms": {"type": "integer", "minimum": 2},
                "c": _number_or_list,
                "agents": {"type": "array", "items": _scalar_model, "minItems": 2, "maxItems": 2},
                "costs": {
                    "oneOf": [
                        {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["11", "01", "10", "00"],
                            "properties": {k: {"type": "number"} for k in ("11", "01", "10", "00")},
                        },
                    ]
                },
                "sigma2_1": _number_or_list,
                "sigma2_2": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 2},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "uniform"}}}, "then": {"required": ["lo", "hi"]}},
                {"if": {"properties": {"kind": {"const": "normal"}}}, "then": {"required": ["sigma2"]}},
                {"if": {"properties": {"kind": {"const": "discrete"}}}, "then": {"required": ["z", "p"]}},
                {"if": {"properties": {"kind": {"const": "product"}}}, "then": {"required": ["agents", "costs"]}},
                {"if": {"properties": {"kind": {"const": "multitask"}}},
                 "then": {"required": ["sigma2_1", "sigma2_2", "costs"]}},
            ],
        },
        "utility": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["sqrt", "cara"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
            },
            "if": {"properties": {"kind": {"const": "cara"}}},
            "then": {"required": ["gamma"]},
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["rating-scale", "entropy", "mutual-information"]},
                "mu": {"oneOf": [{"type": "number", "minimum": 0},
                                 {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]},
                "K": {"type": "integer", "minimum": 2},
                "table": {"type": "array", "items": {"type": "number"}, "minItems": 2},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["seed"],
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "N": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "auto"}]},
                "N_range": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "N_agents": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "n_starts": {"type": "integer", "minimum": 1},
                "method": {"enum": ["auto", "gradient", "coordinate"]},
                "n_angles": {"type": "integer", "minimum": 4},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "required": ["directory"],
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "format": {"enum": ["csv", "json", "both"]},
                "figure": {"enum": ["fig1", "fig4", "fig5"]},
            },
        },
    },
}


def validate_config(cfg) -> dict:
    """Schema-check a parsed config; raises ``ConfigError`` listing the first problem."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {err.message}")
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


def config_digest(cfg) -> str:
    """SHA-256 of the canonical JSON form, excluding the output block."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def with_overrides(cfg, *, seed=None, directory=None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg.setdefault("solver", {})["seed"] = int(seed)
    if directory is not None:
        cfg.setdefault("output", {})["directory"] = str(directory)
    return cfg


# --------------------------------------------------------------------------
# builders


def as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def build_scalar_env(block: dict):
    kind = block["kind"]
    try:
        if kind == "uniform":
            return uniform_z_env(block["lo"], block["hi"])
        if kind == "normal":
            return normal_signal_env(block["sigma2"])
        if kind == "discrete":
            return discrete_grid_env(block["z"], block["p"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    raise ConfigError(f"model kind {kind!r} is not a single-score environment")


def build_atoms(block: dict, m: int):
    """Finite version of a scalar environment with ``m`` equal-mass atoms."""
    env = build_scalar_env(block)
    return env if env.is_discrete else quantile_atoms(env, m)


def build_product(block: dict) -> ProductEnvironment:
    if block["kind"] != "product":
        raise ConfigError("this task needs a product model")
    return ProductEnvironment(tuple(build_scalar_env(a) for a in block["agents"]))


def build_multitask(block: dict, sigma2_1: float) -> MultiTaskEnvironment:
    if block["kind"] != "multitask":
        raise ConfigError("this task needs a multitask model")
    costs = block["costs"]
    if not isinstance(costs, dict):
        raise ConfigError("multitask costs must map effort profiles 11, 01, 10, 00 to costs")
    try:
        return MultiTaskEnvironment((float(sigma2_1), float(block["sigma2_2"])), dict(costs))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def build_utility(block: dict):
    try:
        return utility_from_config(block)
    except ValueError as exc:
        raise ConfigError(f"utility: {exc}") from exc


def build_cost(block: dict, mu: float = 0.0) -> MonitoringCostSpec:
    kind = block["kind"]
    if kind == "mutual-information":
        raise ConfigError("mutual-information cost applies to random-channel only")
    try:
        return MonitoringCostSpec(kind=kind, mu=float(mu), K=int(block.get("K", 100)),
                                  table=block.get("table"))
    except ValueError as exc:
        raise ConfigError(f"cost: {exc}") from exc


def mu_grid(block: dict) -> list[float]:
    return [float(m) for m in as_list(block.get("mu", 0.0))]


def effort_cost(block: dict) -> float:
    c = block.get("c", 1.0)
    if isinstance(c, list):
        raise ConfigError("a single effort cost c is required here")
    if c < 0:
        raise ConfigError("effort cost c must be nonnegative")
    return float(c)


def agent_costs(block: dict) -> tuple[float, float]:
    costs = block["costs"]
    if not isinstance(costs, list):
        raise ConfigError("two-agent costs must be a list [c1, c2]")
    return float(costs[0]), float(costs[1])


def channel_grid(block: dict):
    """Score grid and weights for the random-channel task."""
    n = int(block.get("points", 201))
    if block["kind"] == "uniform":
        z = np.linspace(block["lo"], block["hi"], n)
        p = np.full(n, 1.0 / n)
        return z - p @ z, p
    env = build_atoms(block, n)
    return env.z, env.p
