"""Versioned scenario files: one JSON document drives every command."""

from __future__ import annotations

import json
import math

import jsonschema

from .errors import ScenarioError

VERSION = "adstrain-scenario/1"

_num = {"type": "number"}
_int0 = {"type": "integer", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}

_table = {
    "type": "object",
    "required": ["name", "vocab_size", "dim"],
    "properties": {
        "name": {"type": "string"},
        "vocab_size": _int1,
        "dim": _int1,
        "mean_valency": {"type": "number", "minimum": 0},
        "zipf_s": {"type": "number", "minimum": 0},
        "bytes_per_element": _int1,
        "optimizer": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "valency_dist": {"type": "object"},
    },
}

_model = {
    "type": "object",
    "required": ["tables"],
    "properties": {
        "name": {"type": "string"},
        "dense_step_time_us": {"type": "number", "minimum": 0},
        "tables": {"type": "array", "items": _table, "minItems": 1},
        "features": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}

_stats = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["expected_zipf", "uniform", "explicit"]},
        "batch_size": _int1,
        "valency": {"type": "object", "additionalProperties": _num},
        "rows": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "number", "minimum": 0}}},
    },
}

_footprint = {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}}

SCHEMA = {
    "type": "object",
    "required": ["version", "seed"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": VERSION},
        "seed": _int0,
        "description": {"type": "string"},
        "model": _model,
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nodes"],
            "properties": {
                "nodes": _int1,
                "mem_capacity_per_node": {"type": ["number", "null"], "minimum": 0},
                "search_budget": _int1,
                "stats": _stats,
                "penalty": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                "column_splits": {"type": "array", "items": _int1, "minItems": 1},
                "oracle_limit": _int1,
            },
        },
        "exec": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bytes_per_us"],
            "properties": {
                "bytes_per_us": {"type": "number", "exclusiveMinimum": 0},
                "tc_slowdown": {"type": "number", "minimum": 0},
                "sc_slowdown": {"type": "number", "minimum": 0},
                "true_stats": _stats,
            },
        },
        "ps": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cores", "ps_count"],
            "properties": {
                "cores": _int1,
                "ps_count": _int1,
                "stack": {"type": "boolean"},
                "scheme": {"enum": ["cyclic", "block"]},
                "rpc_overhead_us": {"type": "number", "minimum": 0},
                "per_byte_us": {"type": "number", "minimum": 0},
                "batch_size": _int1,
            },
        },
        "sig": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "workload": {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["shared_pool", "fully_shared"]},
                        "n_models": _int1, "pool": _int1, "per_model": _int1,
                        "k": _int1, "components": _int1, "rounds": _int1, "range_len": _int1,
                    },
                },
                "scheduling": {"enum": ["strict", "weighted"]},
                "ttl": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sim": {"type": "object"},
        "chaos": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"permanent_p": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "preemption_calibration": {
            "type": "object",
            "additionalProperties": False,
            "required": ["w_max"],
            "properties": {"w_max": _int0, "n": _int1, "spacing": _int1, "target": _num},
        },
        "fleet": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pipelines"],
            "properties": {
                "ceiling": {"type": ["integer", "null"], "minimum": 0},
                "time": _int0,
                "pipelines": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name", "chips"],
                        "properties": {"name": {"type": "string"}, "chips": _int0, "sim": {"type": "object"}},
                    },
                },
            },
        },
        "tco": {
            "type": "object",
            "additionalProperties": False,
            "required": ["models"],
            "properties": {
                "params": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                "models": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["name"],
                        "properties": {
                            "name": {"type": "string"},
                            "tpu_chips": {"type": "number", "minimum": 0},
                            "tpu_power_kw": {"type": "number", "minimum": 0},
                            "sharing_models": _int1,
                            "lig_readers": _footprint, "sig_readers": _footprint,
                            "ps": _footprint, "sig_pool": _footprint,
                        },
                    },
                },
            },
        },
    },
}


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse(text: str, source: str = "<scenario>") -> dict:
    """Parse and validate. JSON errors report line:column; schema errors report the field path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ScenarioError([f"{source}: {_path(e)}: {e.message}" for e in errors])
    return doc


def load(path: str) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc.strerror}"]) from None
    return parse(text, path)


def need(doc, section, command):
    if section not in doc:
        raise ScenarioError([f"command {command!r} needs a {section!r} section"])
    return doc[section]


def build_stats(cfg, model, default_batch=1):
    from .partition.plan import TrafficStats

    cfg = cfg or {"kind": "expected_zipf"}
    kind = cfg["kind"]
    if kind == "uniform":
        return TrafficStats.uniform(model.tables)
    if kind == "explicit":
        rows = cfg.get("rows", {})
        missing = [t.name for t in model.tables if t.name not in rows]
        if missing:
            raise ScenarioError([f"stats.rows missing tables {missing}"])
        bad = [t.name for t in model.tables if len(rows[t.name]) != t.vocab_size]
        if bad:
            raise ScenarioError([f"stats.rows length must equal vocab_size for {bad}"])
        return TrafficStats.from_dict({t.name: rows[t.name] for t in model.tables})
    return TrafficStats.expected_zipf(model.tables, cfg.get("batch_size", default_batch), cfg.get("valency"))


def mem_capacity(cfg):
    v = cfg.get("mem_capacity_per_node")
    return math.inf if v is None else float(v)
