"""Run configuration: one YAML/JSON file with per-subcommand sections.

A minimal file::

    kernel: {preset: inverse_square}
    seed: 1
    picard-solve:
      lattice: {dxi: 1.0, xi_max: 8.0}
      datum: {preset: single-mode, k0: [0, 1, 2], amplitude: 0.5}

Overrides use dotted keys (``picard-solve.K=8``); values are parsed as YAML
scalars, so ``8`` is an int and ``[1, 2]`` a list.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigurationError
from .kernels import Kernel, exp_damped_kernel, inverse_square_kernel, make_product_kernel

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

KERNEL_SCHEMA = {
    "type": "object",
    "oneOf": [
        {"required": ["preset"], "maxProperties": 1},
        {"required": ["dim", "form", "theta"]},
    ],
    "properties": {
        "preset": {"enum": ["inverse_square", "exp_damped"]},
        "dim": _POS_INT,
        "form": {"enum": ["power_law", "truncated_power", "exp_damped", "product", "tabulated_radial"]},
        "parameters": {"type": "object"},
        "theta": {"type": "number", "minimum": 0},
        "scale": _POS,
        "sharp_B": _POS,
        "validated": {"type": "boolean"},
        "name": {"type": "string"},
    },
    "additionalProperties": False,
}

LATTICE_SCHEMA = {
    "type": "object",
    "required": ["dxi", "xi_max"],
    "properties": {"dxi": _POS, "xi_max": _POS, "dim": _POS_INT,
                   "offset": {"type": "array", "items": _NUM}},
    "additionalProperties": False,
}

DATUM_SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["single-mode", "random-small", "h-shaped", "heat-mode"]},
        "file": {"type": "string"},
        "k0": {"type": "array", "items": _NUM},
        "amplitude": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "direction": {"type": "array", "items": _NUM},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "kernel": KERNEL_SCHEMA,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": _POS_INT,
        "verify-kernel": {
            "type": "object",
            "properties": {
                "theta": {"type": "number", "minimum": 0},
                "n_radii": _POS_INT, "n_directions": _POS_INT,
                "r_min": _POS, "r_max": _POS,
                "convolution_points": {"type": "array", "items": _POS},
                "exponents": {"type": "boolean"},
                "split_integrals": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "nonexistence-trace": {
            "type": "object",
            "properties": {
                "candidate": KERNEL_SCHEMA,
                "theta": {"type": "number", "minimum": 0},
                "K": {"type": "integer", "minimum": 0, "maximum": 64},
                "xi0": {"type": "array", "items": _NUM},
                "certificate": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "cascade-solve": {
            "type": "object",
            "properties": {
                "nu": _POS,
                "points": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2}},
                "N": _POS_INT,
                "depth_cap": {"type": "integer", "minimum": 0},
                "branching": {"type": "boolean"},
                "zero_forcing": {"type": "boolean"},
                "lattice": LATTICE_SCHEMA,
                "datum": DATUM_SCHEMA,
                "node_budget": _POS_INT,
            },
            "additionalProperties": False,
        },
        "picard-solve": {
            "type": "object",
            "properties": {
                "nu": _POS, "T": _POS, "K": {"type": "integer", "minimum": 0},
                "n_steps": _POS_INT,
                "lattice": LATTICE_SCHEMA,
                "datum": DATUM_SCHEMA,
                "overflow_guard": _POS,
            },
            "additionalProperties": False,
        },
        "norms": {
            "type": "object",
            "properties": {
                "field": DATUM_SCHEMA,
                "lattice": LATTICE_SCHEMA,
                "norms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["PM", "Fh", "Besov", "BMO-1"]},
                            "a": {"type": "number", "minimum": 0},
                            "alpha": _POS, "p": {"type": "number", "minimum": 1},
                            "T": _POS,
                        },
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "cross-check": {
            "type": "object",
            "properties": {
                "N": _POS_INT,
                "sites": {"type": "array", "items": {"type": "array", "items": _NUM}},
                "depths": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "t": _POS,
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "kernel": {"preset": "inverse_square"},
    "seed": 0,
    "workers": 1,
    "verify-kernel": {"n_radii": 200, "n_directions": 4, "r_min": 1e-3, "r_max": 1e3,
                      "convolution_points": [0.5, 1.0, 2.0], "exponents": True,
                      "split_integrals": False},
    "nonexistence-trace": {"K": 6, "certificate": True},
    "cascade-solve": {"nu": 1.0, "points": [[0.0, 0.0, 1.0, 0.1]], "N": 10000, "depth_cap": 40,
                      "branching": True, "zero_forcing": True,
                      "datum": {"preset": "heat-mode"}},
    "picard-solve": {"nu": 1.0, "T": 0.1, "K": 6, "n_steps": 64,
                     "lattice": {"dxi": 1.0, "xi_max": 8.0},
                     "datum": {"preset": "single-mode", "k0": [0, 1, 2], "amplitude": 0.5}},
    "norms": {"norms": [{"kind": "PM", "a": 2.0}, {"kind": "Besov", "alpha": 0.5, "p": 2},
                        {"kind": "BMO-1", "T": 0.25}]},
    "cross-check": {"N": 100000, "depths": [0, 1, 2, 3],
                    "sites": [[0, 1, 2], [1, 1, 2], [0, 0, 1]]},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            # a user-supplied kernel or datum replaces the default wholesale
            if k in ("kernel", "candidate", "datum", "field", "lattice"):
                out[k] = copy.deepcopy(v)
            else:
                out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    return data


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigurationError(f"override {item!r} has an empty key")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse override value {raw!r}") from exc
        if isinstance(value, str):
            # YAML 1.1 reads 1e6 as a string
            try:
                value = float(value)
            except ValueError:
                pass
        node = cfg
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(f"override {key!r} descends into a non-mapping")
            node = nxt
        node[parts[-1]] = value
    return cfg


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from exc
    return cfg


def resolve(path=None, overrides=(), seed=None, workers=None) -> dict:
    """Defaults, then the file, then overrides, then explicit flags; validated."""
    user = read_config_file(path) if path else {}
    cfg = _merge(DEFAULTS, user)
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    if workers is not None:
        cfg["workers"] = workers
    return validate(cfg)


def kernel_from_config(kcfg: dict) -> Kernel:
    validate({"kernel": kcfg})
    if "preset" in kcfg:
        return inverse_square_kernel() if kcfg["preset"] == "inverse_square" else exp_damped_kernel()
    params = dict(kcfg.get("parameters", {}))
    kw = {k: kcfg[k] for k in ("scale", "sharp_B", "validated", "name") if k in kcfg}
    if kcfg["form"] == "product" and kcfg.get("validated", False):
        if "blocks" not in params:
            raise ConfigurationError("product kernel missing blocks")
        k = make_product_kernel([tuple(b) for b in params["blocks"]], scale=kw.get("scale", 1.0))
        if abs(k.theta - kcfg["theta"]) > 1e-12:
            raise ConfigurationError("product kernel theta must equal the sum of block thetas")
        return k
    return Kernel(kcfg["dim"], kcfg["form"], params, kcfg["theta"], **kw)
