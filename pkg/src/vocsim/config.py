"""Scenario files: JSON-syntax configuration, schema validation and object construction.

A scenario names the oscillator parameters, per-inverter current gains, the
network (pre-reduced Kron stages or a full nodal description), initial phases
and a non-empty list of experiments. All quantities are SI.
"""
import json

import jsonschema
import numpy as np

from .errors import ConfigError
from .network import KronNetwork, NetworkSpec, reduce_spec
from .oscillator import derive_params

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_POS_VEC = {"type": "array", "items": _POS, "minItems": 1}
_MATRIX = {"type": "array", "items": _VEC, "minItems": 1}
_NUM_OR_VEC = {"oneOf": [_NUM, _VEC]}


def _experiment(kind, properties, required=()):
    props = {"kind": {"const": kind}, "name": {"type": "string"}}
    props.update(properties)
    return {"type": "object", "properties": props, "required": ["kind", *required],
            "additionalProperties": False}


EXPERIMENTS = {
    "simulate": _experiment("simulate", {
        "t_end": _NONNEG,
        "steps_per_cycle": {"type": "integer", "minimum": 200},
        "record_stride": {"type": "integer", "minimum": 1},
        "share_times": _VEC,
        "expected_shares": _VEC,
        "share_tolerance": _POS,
    }, ["t_end"]),
    "power_sweep": _experiment("power_sweep", {
        "powers": {"type": "object", "properties": {
            "start": _NONNEG, "stop": _NONNEG, "count": {"type": "integer", "minimum": 1}},
            "required": ["start", "stop", "count"], "additionalProperties": False},
        "runs": {"type": "array", "minItems": 1, "items": {
            "type": "object", "properties": {
                "eps": {"oneOf": [_POS, {"type": "null"}]}, "t_end": _POS, "tolerance": _POS},
            "required": ["eps", "t_end"], "additionalProperties": False}},
        "steps_per_cycle": {"type": "integer", "minimum": 200},
    }, ["powers", "runs"]),
    "analyze": _experiment("analyze", {
        "initial_guess": {"type": "object", "properties": {"r": _NUM_OR_VEC, "theta": _NUM_OR_VEC},
                          "additionalProperties": False},
        "search_source_phases": {"type": "boolean"},
        "phase_grid": {"type": "integer", "minimum": 1},
        "operating_power": _NONNEG,
    }),
    "certificate_sweep": _experiment("certificate_sweep", {
        "count": {"type": "integer", "minimum": 1},
        "n_min": {"type": "integer", "minimum": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "line_scale": _POS,
        "shunt_scale": _POS,
        "source_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "source_amplitude": _NONNEG,
    }, ["count"]),
    "correspond": _experiment("correspond", {
        "eps": _POS_VEC,
        "n_cycles": {"type": "integer", "minimum": 2},
        "steps_per_cycle": {"type": "integer", "minimum": 200},
        "samples_per_cycle": {"type": "integer", "minimum": 2},
        "modes": {"type": "array", "items": {"enum": ["voc", "self", "mismatch"]}, "minItems": 1},
        "n_scale": _POS,
        "halving_tolerance": _POS,
    }, ["eps"]),
    "rate": _experiment("rate", {
        "eps": _POS_VEC,
        "r_from": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "r_to": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "steps_per_cycle": {"type": "integer", "minimum": 200},
        "slope_tolerance": _POS,
    }, ["eps"]),
}

SUBCOMMAND_KINDS = {
    "simulate": ("simulate", "power_sweep"),
    "analyze": ("analyze", "certificate_sweep"),
    "correspond": ("correspond",),
    "rate": ("rate",),
}

_STAGE = {
    "type": "object",
    "properties": {
        "t": _NONNEG,
        "Q": _MATRIX,
        "sources": {"type": "array", "items": {
            "type": "object", "properties": {"amplitude": _NONNEG, "phase": _NUM},
            "required": ["amplitude", "phase"], "additionalProperties": False}},
        "loads": {"type": "array", "items": {
            "type": "object", "properties": {
                "power": _NONNEG, "power_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            "required": ["power", "power_factor"], "additionalProperties": False}},
    },
    "required": ["t", "Q"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "oscillator": {
            "type": "object",
            "properties": {"R": _POS, "L": _POS, "C": _POS, "sigma": _POS, "k": _POS, "eps": _POS},
            "required": ["R", "L", "C", "sigma", "k"],
            "additionalProperties": False,
        },
        "kappa": {"oneOf": [_POS, _POS_VEC]},
        "network": {
            "type": "object",
            "properties": {
                "kron": {
                    "type": "object",
                    "properties": {"stages": {"type": "array", "items": _STAGE, "minItems": 1},
                                   "conductance_scale": _POS},
                    "required": ["stages"],
                    "additionalProperties": False,
                },
                "full": {
                    "type": "object",
                    "properties": {
                        "n_nodes": {"type": "integer", "minimum": 1},
                        "inverter_nodes": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                           "minItems": 1},
                        "edges": {"type": "array", "items": {
                            "type": "array", "items": [{"type": "integer"}, {"type": "integer"}, _NONNEG],
                            "minItems": 3, "maxItems": 3}},
                        "shunts": {"type": "array", "items": _NONNEG},
                        "interior_sources": {"type": "array", "items": {
                            "type": "object",
                            "properties": {"node": {"type": "integer", "minimum": 0},
                                           "amplitude": _NONNEG, "phase": _NUM},
                            "required": ["node", "amplitude", "phase"], "additionalProperties": False}},
                    },
                    "required": ["n_nodes", "inverter_nodes"],
                    "additionalProperties": False,
                },
            },
            "oneOf": [{"required": ["kron"]}, {"required": ["full"]}],
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {"theta0": _NUM_OR_VEC, "amplitude": {"oneOf": [_POS, _POS_VEC]}},
            "additionalProperties": False,
        },
        "experiments": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["kind"],
                      "properties": {"kind": {"enum": sorted(EXPERIMENTS)}}},
        },
        "output": {"type": "object", "properties": {"directory": {"type": "string"}},
                   "additionalProperties": False},
    },
    "required": ["oscillator", "network", "experiments"],
    "additionalProperties": False,
}


def _path(parts):
    return "/".join(str(p) for p in parts) or "<root>"


def _validate_schema(data, schema, prefix=()):
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(err.message, _path(list(prefix) + list(err.absolute_path)))


def validate(data):
    """Raise ConfigError (with a field path) unless ``data`` is a well-formed scenario."""
    _validate_schema(data, SCHEMA)
    for i, exp in enumerate(data["experiments"]):
        _validate_schema(exp, EXPERIMENTS[exp["kind"]], ("experiments", i))
    n = inverter_count(data)
    kappa = data.get("kappa", 1.0)
    if isinstance(kappa, list) and len(kappa) != n:
        raise ConfigError(f"expected {n} gains, got {len(kappa)}", "kappa")
    for key in ("theta0", "amplitude"):
        value = data.get("initial", {}).get(key)
        if isinstance(value, list) and len(value) != n:
            raise ConfigError(f"expected {n} entries, got {len(value)}", f"initial/{key}")
    if "kron" in data["network"]:
        stages = data["network"]["kron"]["stages"]
        if stages[0]["t"] != 0:
            raise ConfigError("first stage must start at t = 0", "network/kron/stages/0/t")
        for s, stage in enumerate(stages):
            Q = stage["Q"]
            if any(len(row) != n for row in Q) or len(Q) != n:
                raise ConfigError(f"Q must be {n} x {n}", f"network/kron/stages/{s}/Q")
            for key in ("sources", "loads"):
                if key in stage and len(stage[key]) != n:
                    raise ConfigError(f"expected one entry per inverter ({n})", f"network/kron/stages/{s}/{key}")
            if s and stage["t"] <= stages[s - 1]["t"]:
                raise ConfigError("stage times must increase", f"network/kron/stages/{s}/t")
    return data


def inverter_count(data):
    net = data["network"]
    if "kron" in net:
        return len(net["kron"]["stages"][0]["Q"])
    return len(net["full"]["inverter_nodes"])


def parse(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON syntax: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return validate(data)


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse(text)


def serialize(data):
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def oscillators(data):
    """Per-inverter OscillatorParams with gains applied (and eps rescaled if requested)."""
    o = data["oscillator"]
    try:
        base = derive_params(o["R"], o["L"], o["C"], o["sigma"], o["k"])
    except ValueError as exc:
        raise ConfigError(str(exc), "oscillator") from None
    if "eps" in o:
        base = base.with_eps(o["eps"])
    n = inverter_count(data)
    kappa = data.get("kappa", 1.0)
    kappa = [kappa] * n if not isinstance(kappa, list) else kappa
    return [base.with_kappa(k) for k in kappa]


def _stage_network(stage, params, scale):
    from .droop import constant_power_factor_load
    net = KronNetwork(np.array(stage["Q"], float) * scale)
    if "sources" in stage:
        net = net.with_sources([s["amplitude"] * np.exp(1j * s["phase"]) for s in stage["sources"]])
    if "loads" in stage:
        pairs = [constant_power_factor_load(p, ld["power"], ld["power_factor"]) if ld["power"] > 0 else (0.0, 0.0)
                 for p, ld in zip(params, stage["loads"])]
        net = net.with_tracking_loads([c for c, _ in pairs], [a for _, a in pairs])
    return net


def networks(data, params=None):
    """Timed ``(t, KronNetwork)`` stages described by the scenario."""
    params = params or oscillators(data)
    spec = data["network"]
    try:
        if "kron" in spec:
            scale = spec["kron"].get("conductance_scale", 1.0)
            return tuple((float(st["t"]), _stage_network(st, params, scale)) for st in spec["kron"]["stages"])
        full = spec["full"]
        sources = {s["node"]: (s["amplitude"], s["phase"]) for s in full.get("interior_sources", [])}
        ns = NetworkSpec(full["n_nodes"], tuple(full["inverter_nodes"]), tuple(map(tuple, full.get("edges", []))),
                         tuple(full.get("shunts", [])), sources)
        return ((0.0, reduce_spec(ns)),)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "network") from None


def initial_phases(data):
    n = inverter_count(data)
    theta0 = data.get("initial", {}).get("theta0", 0.0)
    return np.broadcast_to(np.asarray(theta0, float), (n,)).copy()


def initial_amplitude(data):
    amp = data.get("initial", {}).get("amplitude")
    return None if amp is None else np.broadcast_to(np.asarray(amp, float), (inverter_count(data),)).copy()


def experiments(data, subcommand):
    kinds = SUBCOMMAND_KINDS[subcommand]
    chosen = [e for e in data["experiments"] if e["kind"] in kinds]
    if not chosen:
        raise ConfigError(f"no experiment of kind {' or '.join(kinds)} for '{subcommand}'", "experiments")
    return chosen


def linspace(block):
    return np.linspace(block["start"], block["stop"], block["count"]) if block["count"] > 1 else \
        np.array([block["start"]], float)
