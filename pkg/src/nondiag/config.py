"""Run-configuration schema and builders (JSON in, solver objects out)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np

from .coeffmodel import model_from_config
from .expr import evaluate, parse_expr
from .grid import BoundarySpec, Dirichlet, Grid1D, PrescribedFlux, RobinEps, TimeController, ZeroFlux
from .regularize import EpsilonScheme

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_str_list = {"type": "array", "items": {"type": "string", "minLength": 1}, "minItems": 1}
_num_list = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


_bc = _obj({
    "type": {"enum": ["dirichlet", "zero_flux", "flux", "robin"]},
    "value": _num,
    "reference": _num_list,
}, ["type"])

_monitor_item = {
    "oneOf": [
        {"enum": ["invariant", "energy", "mass"]},
        _obj({"grad_lp": _obj({"alpha": _int_pos, "p": {"type": "integer", "minimum": 2}})}, ["grad_lp"]),
        _obj({"holder": _obj({"gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                              "r": {"type": ["number", "null"]}})}, ["holder"]),
        _obj({"omega": _obj({"delta": _pos})}, ["omega"]),
    ]
}

SCHEMA: dict = _obj({
    "model": {
        "oneOf": [
            _obj({"catalog": {"type": "string"}, "params": {"type": "object", "additionalProperties": _num}},
                 ["catalog"]),
            _obj({
                "expressions": _obj({
                    "A": {"type": "array"}, "phi": {"type": "array"}, "g": {"type": "array"},
                }, ["A", "phi", "g"]),
                "d": _int_pos, "N": _int_pos,
                "params": {"type": "object", "additionalProperties": _num},
            }, ["expressions"]),
        ]
    },
    "grid": _obj({"n": {"type": "integer", "minimum": 4}, "x_min": _num, "x_max": _num}, ["n"]),
    "initial": _str_list,
    "boundary": _obj({"left": {"type": "array", "items": _bc}, "right": {"type": "array", "items": _bc}},
                     ["left", "right"]),
    "regularization": _obj({"epsilon": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                            "v": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}),
    "time": _obj({"T": _pos, "dt_init": _pos, "dt_min": _pos, "dt_max": _pos, "newton_tol": _pos,
                  "newton_max_iters": _int_pos}, ["T"]),
    "solver": _obj({"upwind": {"type": "boolean"}, "strict": {"type": "boolean"}}),
    "monitors": {"type": "array", "items": _monitor_item},
    "blowup": _obj({"monitor": {"type": "string"}, "factor": _pos, "lookback": {"type": "integer", "minimum": 2}}),
    "output": _obj({"dir": {"type": "string"}, "snapshot_cadence": _pos, "format": {"enum": ["csv", "npz"]}}),
    "restart_from": {"type": "string"},
    "check": _obj({"edge_samples": {"type": "integer", "minimum": 2}, "x_samples": _int_pos,
                   "u_samples": _int_pos, "sum_edge": {"enum": ["one", "zero"]},
                   "random_samples": {"type": "integer", "minimum": 0}}),
    "sweep": _obj({
        "kind": {"enum": ["epsilon", "perturbation"]},
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                     "minItems": 2},
        "deltas": {"type": "array", "items": _pos, "minItems": 1},
        "perturbation": _str_list,
    }, ["kind"]),
    "mms": _obj({"grids": {"type": "array", "items": {"type": "integer", "minimum": 4}},
                 "dt": _pos, "dts": {"type": "array", "items": _pos}, "n": {"type": "integer", "minimum": 4},
                 "T": _pos, "study": {"enum": ["space", "time", "both"]}}),
    "analytic": _obj({"kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 4},
                      "deltas": {"type": "array", "items": _pos, "minItems": 1},
                      "times": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                                "minItems": 1},
                      "n_points": {"type": "integer", "minimum": 3}}),
})

REQUIRED = {
    "check": ["model"],
    "run": ["model", "grid", "boundary", "time"],
    "sweep": ["model", "grid", "initial", "boundary", "time", "sweep"],
    "mms": [],
    "analytic": [],
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts.append(extra[0] if extra else "?")
    return ".".join(parts) or "<root>"


def _best_error(errors):
    # for oneOf failures descend into the branch that got furthest
    err = jsonschema.exceptions.best_match(errors)
    while err.context:
        err = jsonschema.exceptions.best_match(err.context)
    return err


def validate(cfg: Any, command: str) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    errors = list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg))
    if errors:
        err = _best_error(errors)
        raise ConfigError(err.message, _error_path(err))
    for key in REQUIRED[command]:
        if key not in cfg:
            raise ConfigError(f"required for '{command}'", key)
    if command in ("run", "sweep") and "initial" not in cfg and "restart_from" not in cfg:
        raise ConfigError(f"required for '{command}' (or give restart_from)", "initial")
    return cfg


def load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(exc)) from exc


# --- builders ----------------------------------------------------------------------


def build_model(cfg: Mapping):
    try:
        return model_from_config(cfg["model"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "model") from exc


def build_grid(cfg: Mapping) -> Grid1D:
    g = cfg["grid"]
    try:
        return Grid1D(int(g["n"]), float(g.get("x_min", 0.0)), float(g.get("x_max", 1.0)))
    except ValueError as exc:
        raise ConfigError(str(exc), "grid") from exc


def build_initial(sources, params: Mapping | None = None, key: str = "initial"):
    """Callable x -> (len(x), N) from one expression in x1 per component."""
    try:
        exprs = [parse_expr(src, 1, 0) for src in sources]
    except ValueError as exc:
        raise ConfigError(str(exc), key) from exc
    params = dict(params or {})

    def u0(x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        empty = np.zeros((len(x), 0))
        return np.stack([evaluate(e, x, empty, params) for e in exprs], axis=-1)

    return u0


def build_boundary(cfg: Mapping, N: int) -> BoundarySpec:
    sides = {}
    for side in ("left", "right"):
        items = cfg["boundary"][side]
        if len(items) != N:
            raise ConfigError(f"expected {N} conditions, got {len(items)}", f"boundary.{side}")
        conds = []
        for i, item in enumerate(items):
            kind = item["type"]
            where = f"boundary.{side}.{i}"
            if kind in ("dirichlet", "flux") and "value" not in item:
                raise ConfigError("missing 'value'", where)
            if kind == "dirichlet":
                conds.append(Dirichlet(float(item["value"])))
            elif kind == "flux":
                conds.append(PrescribedFlux(float(item["value"])))
            elif kind == "zero_flux":
                conds.append(ZeroFlux())
            else:
                ref = item.get("reference")
                if ref is None or len(ref) != N:
                    raise ConfigError(f"robin needs a reference state of length {N}", where)
                conds.append(RobinEps(0.0, tuple(float(r) for r in ref)))
        sides[side] = tuple(conds)
    return BoundarySpec(sides["left"], sides["right"])


def build_controller(cfg: Mapping) -> TimeController:
    t = cfg["time"]
    dt_init = float(t.get("dt_init", 1e-3))
    kw = {
        "dt_init": dt_init,
        "dt_min": float(t.get("dt_min", min(1e-8, dt_init))),
        "dt_max": float(t.get("dt_max", max(1e-1, dt_init))),
    }
    if "newton_tol" in t:
        kw["newton_tol"] = float(t["newton_tol"])
    if "newton_max_iters" in t:
        kw["newton_max_iters"] = int(t["newton_max_iters"])
    try:
        return TimeController(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "time") from exc


def build_scheme(cfg: Mapping) -> EpsilonScheme | None:
    reg = cfg.get("regularization")
    if not reg or not reg.get("epsilon"):
        return None
    try:
        return EpsilonScheme(float(reg["epsilon"]), tuple(reg.get("v", (0.25, 0.25))))
    except ValueError as exc:
        raise ConfigError(str(exc), "regularization") from exc
