"""Experiment configuration: defaults, schema validation and merging.

A config is a JSON object. Keys missing from a user file take the values in
``DEFAULTS``; unknown keys are errors. ``print-defaults`` shows the full tree.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema

SUITES = ("semigroup", "resolvent", "bounds", "fixedpoint", "simulate", "uniqueness", "zygmund")

OU1 = {"eigenvalues": [1.0]}
BURGERS32 = {"family": "burgers1d", "M": 32}
CH3 = {"family": "cahnhilliard3d", "K": 3}

DEFAULTS: dict[str, Any] = {
    "suite": "all",
    "seed": 0,
    "workers": 1,
    "output_dir": None,
    "figures": False,
    "semigroup": {
        "c1_tolerance": 1e-5,
        "lambda_t_points": 60,
        "lambda_t_models": [OU1, BURGERS32, CH3],
        "gradient": {
            "models": [OU1, {"family": "burgers1d", "M": 8}, {"eigenvalues": [1.0, 4.0, 9.0]}],
            "times": [0.01, 0.1, 1.0],
            "points": 6,
            "rel_tol": 1e-4,
        },
        "montecarlo": {"samples": 1_000_000, "sigmas": 3.0, "times": [0.1, 1.0]},
        "d2": {"times": [0.01, 0.1, 1.0], "points": 16, "slack": 2.0},
        "probe": {"model": BURGERS32, "t_grid": [1e-3, 1.778279e-3, 3.162278e-3, 5.623413e-3, 1e-2],
                  "points": 32, "polish": 2, "slope_range": [-1.15, -0.85]},
    },
    "resolvent": {
        "model": OU1,
        "lam": 1.0,
        "mu": 2.0,
        "identity_tol": 1e-4,
        "generator_points": [512, 1024],
        "generator_tol": 5e-3,
        "fd_tol": 1e-5,
    },
    "bounds": {
        "models": {"ou": OU1, "burgers": BURGERS32, "cahnhilliard": CH3},
        "lams": [1.0, 0.1],
        "z_shift": 0.5,
        "points": 32,
        "polish": 2,
        "tolerance": 1e-2,
        "increment": {"s_grid": [1e-3, 3.162278e-3, 1e-2, 3.162278e-2, 1e-1, 3.162278e-1, 1.0],
                      "points": 16, "tolerance": 5e-2, "min_slope": 0.4, "lam": 1.0},
    },
    "fixedpoint": {
        "lams": [1.0, 2.0],
        "delta": 0.2,
        "max_contraction": 0.8,
        "residual_tol": 1e-3,
        "truncation": {"levels": [1, 4, 16, 64], "m": 2, "points": [0.0, 0.5, -1.0]},
    },
    "simulate": {
        "exact_law": {"model": {"family": "burgers1d", "M": 16}, "N": 10_000, "dt": 0.1,
                      "times": [0.1, 1.0, 5.0], "level": 0.01},
        "constant_drift": {"N": 10_000, "dt": 0.05, "z": 1.0},
        "moments": {"m_levels": [8, 16, 32, 64], "N": 4000, "dt": 0.01, "T": 1.0, "rel_spread": 0.10},
        "weak_order": {"dts": [0.1, 0.05, 0.025], "N": 20_000, "T": 1.0, "delta": 0.2},
        "girsanov": {"N": 20_000, "dt": 0.01, "T": 1.0, "shift": 0.5},
        "h01": {"m_levels": [8, 16, 32], "N": 4000, "dt": 0.005, "T": 0.25, "truncation": 10.0},
        "factorization": {"N": 10_000, "dt": 0.01, "alpha": 0.5, "substeps": 2},
    },
    "uniqueness": {
        "model": {"family": "burgers1d", "M": 8},
        "drift": {"kind": "nemytskii_burgers", "h": "tanh", "grid": 32},
        "x0": [1.0],
        "N": 10_000,
        "T": 1.0,
        "times": [0.25, 0.5, 1.0],
        "level": 0.01,
        "constructions": [
            {"scheme": "exponential_euler", "dts": [1e-2, 5e-3, 2.5e-3]},
            {"scheme": "factorization_check", "dts": [1e-2, 5e-3, 2.5e-3], "alpha": 0.5, "substeps": 2},
        ],
        "mollified": {"n": 64.0, "dt": 0.01},
        "laplace": {"N": 100_000, "dt": 0.01, "cases": 16},
    },
    "zygmund": {
        "h_grid": [1e-3, 1e-2, 0.1, 0.25, 0.5, 1.0],
        "points": 64,
        "kink_tol": 1e-3,
        "dyadic": {"t_grid": [1e-3, 1.778279e-3, 3.162278e-3, 5.623413e-3, 1e-2, 1.778279e-2, 3.162278e-2,
                              5.623413e-2, 1e-1],
                   "improved": [-0.65, -0.35], "generic": [-1.15, -0.85]},
    },
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}
_NUMS = {"type": "array", "items": _NUM}
_POSS = {"type": "array", "items": _POS, "minItems": 1}
_MODEL = {
    "type": "object",
    "properties": {"eigenvalues": _POSS, "family": {"enum": ["burgers1d", "h01burgers", "cahnhilliard3d"]},
                   "M": _INT, "K": _INT},
    "additionalProperties": False,
}
_RANGE = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_DRIFT = {"type": "object", "properties": {"kind": {"type": "string"}}, "required": ["kind"]}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA: dict[str, Any] = _obj({
    "suite": {"enum": list(SUITES) + ["all"]},
    "seed": {"type": "integer", "minimum": 0},
    "workers": _INT,
    "output_dir": {"type": ["string", "null"]},
    "figures": {"type": "boolean"},
    "semigroup": _obj({
        "c1_tolerance": _POS, "lambda_t_points": _INT, "lambda_t_models": {"type": "array", "items": _MODEL},
        "gradient": _obj({"models": {"type": "array", "items": _MODEL}, "times": _POSS, "points": _INT,
                          "rel_tol": _POS}),
        "montecarlo": _obj({"samples": _INT, "sigmas": _POS, "times": _POSS}),
        "d2": _obj({"times": _POSS, "points": _INT, "slack": _POS}),
        "probe": _obj({"model": _MODEL, "t_grid": _POSS, "points": _INT, "polish": {"type": "integer", "minimum": 0},
                       "slope_range": _RANGE}),
    }),
    "resolvent": _obj({"model": _MODEL, "lam": _POS, "mu": _POS, "identity_tol": _POS,
                       "generator_points": {"type": "array", "items": _INT}, "generator_tol": _POS, "fd_tol": _POS}),
    "bounds": _obj({
        "models": {"type": "object", "additionalProperties": _MODEL},
        "lams": _POSS, "z_shift": _NUM, "points": _INT, "polish": {"type": "integer", "minimum": 0},
        "tolerance": _POS,
        "increment": _obj({"s_grid": _POSS, "points": _INT, "tolerance": _POS, "min_slope": _NUM, "lam": _POS}),
    }),
    "fixedpoint": _obj({
        "lams": _POSS, "delta": {"type": "number", "minimum": 0}, "max_contraction": _POS, "residual_tol": _POS,
        "truncation": _obj({"levels": _POSS, "m": _INT, "points": _NUMS}),
    }),
    "simulate": _obj({
        "exact_law": _obj({"model": _MODEL, "N": _INT, "dt": _POS, "times": _POSS, "level": _POS}),
        "constant_drift": _obj({"N": _INT, "dt": _POS, "z": _NUM}),
        "moments": _obj({"m_levels": {"type": "array", "items": _INT}, "N": _INT, "dt": _POS, "T": _POS,
                         "rel_spread": _POS}),
        "weak_order": _obj({"dts": _POSS, "N": _INT, "T": _POS, "delta": _NUM}),
        "girsanov": _obj({"N": _INT, "dt": _POS, "T": _POS, "shift": _NUM}),
        "h01": _obj({"m_levels": {"type": "array", "items": _INT}, "N": _INT, "dt": _POS, "T": _POS,
                     "truncation": _POS}),
        "factorization": _obj({"N": _INT, "dt": _POS, "alpha": _POS, "substeps": _INT}),
    }),
    "uniqueness": _obj({
        "model": _MODEL, "drift": _DRIFT, "x0": _NUMS, "N": _INT, "T": _POS, "times": _POSS, "level": _POS,
        "constructions": {"type": "array", "minItems": 2, "items": _obj({
            "scheme": {"enum": ["exponential_euler", "factorization_check"]}, "dts": _POSS, "alpha": _POS,
            "substeps": _INT, "x0": _NUMS, "seed": {"type": "integer", "minimum": 0}}, ("scheme", "dts"))},
        "mollified": _obj({"n": _POS, "dt": _POS}),
        "laplace": _obj({"N": _INT, "dt": _POS, "cases": _INT}),
    }),
    "zygmund": _obj({
        "h_grid": _POSS, "points": _INT, "kink_tol": _POS,
        "dyadic": _obj({"t_grid": _POSS, "improved": _RANGE, "generic": _RANGE}),
    }),
})


class ConfigError(ValueError):
    pass


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) and k not in ("model", "drift", "models"):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _semantic_checks(cfg: Mapping[str, Any]) -> None:
    u = cfg["uniqueness"]
    ref = u.get("x0")
    for i, c in enumerate(u["constructions"]):
        if "x0" in c and list(c["x0"]) != list(ref):
            raise ConfigError(f"uniqueness.constructions[{i}].x0: initial datum {c['x0']} differs from "
                              f"uniqueness.x0 {ref}; constructions must share (model, drift, x0, T)")
    s = cfg["simulate"]["factorization"]
    if not 0.25 < s["alpha"] < 1:
        raise ConfigError("simulate.factorization.alpha: must lie in (1/4, 1)")


def validate(cfg: Mapping[str, Any]) -> None:
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e.absolute_path)}: {e.message}")
    _semantic_checks(cfg)


def load(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> dict:
    user: dict = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError("<root>: config must be a JSON object")
    cfg = merge(merge(DEFAULTS, user), overrides or {})
    validate(cfg)
    return cfg
