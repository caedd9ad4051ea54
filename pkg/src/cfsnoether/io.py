"""JSON formats for systems, variations, regions, configs, models and packets.

Complex arrays are nested lists whose innermost entries are [re, im] pairs.
Every loader validates the document against a schema first and raises
SchemaError on anything malformed.
"""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .action import ActionParams
from .continuum import Grid, LemmaGrid, QhatModel, WavePacket, model_from_dict
from .measure import CompactKernel, DiscreteMeasure, constant_kernel, diagonal_kernel, matrix_kernel
from .noether import KillingVariation
from .optimize import OptimizerConfig
from .spectral import CfsPoint
from .variations import Identity, PointFlow, UnitaryConjugation, Variation


class SchemaError(ValueError):
    pass


_num = {"type": "number"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_cmatrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _pair}}
_weights = {"type": "array", "items": {"type": "number", "minimum": 0}}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["mode", "points", "weights"],
    "properties": {
        "mode": {"enum": ["cfs", "compact"]},
        "n": {"type": "integer", "minimum": 1},
        "f": {"type": "integer", "minimum": 1},
        "points": {"type": "array"},
        "weights": _weights,
        "total_volume": {"type": "number", "exclusiveMinimum": 0},
        "kernel": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["diagonal", "constant", "matrix"]},
                "m": {"type": "integer", "minimum": 1},
                "value": _num,
                "matrix": {"type": "array", "items": {"type": "array", "items": _num}},
            },
        },
    },
    "allOf": [
        {
            "if": {"properties": {"mode": {"const": "cfs"}}},
            "then": {"properties": {"points": {"items": {
                "type": "object", "required": ["psi"], "properties": {"psi": _cmatrix}}}}},
        },
        {
            "if": {"properties": {"mode": {"const": "compact"}}},
            "then": {"required": ["kernel"],
                     "properties": {"points": {"items": {"type": "integer", "minimum": 0}}}},
        },
    ],
}

_table = {
    "type": "object",
    "required": ["kind", "taus", "paths"],
    "properties": {
        "kind": {"const": "table"},
        "taus": {"type": "array", "items": _num, "minItems": 1},
        "paths": {"type": "array"},
    },
}

VARIATION_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["unitary", "permutation", "table", "identity", "killing"]},
        "generator": _cmatrix,
        "tau_max": {"type": "number", "exclusiveMinimum": 0},
        "perm": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "step": {"type": "number", "exclusiveMinimum": 0},
        "reach": {"type": "integer", "minimum": 1},
        "taus": {"type": "array", "items": _num},
        "paths": {"type": "array"},
        "flow": {"type": "object"},
        "unitary": {"type": "object"},
        "K": _cmatrix,
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "unitary"}}}, "then": {"required": ["generator"]}},
        {"if": {"properties": {"kind": {"const": "permutation"}}}, "then": {"required": ["perm"]}},
        {"if": {"properties": {"kind": {"const": "table"}}}, "then": _table},
        {"if": {"properties": {"kind": {"const": "killing"}}}, "then": {"required": ["flow", "unitary"]}},
    ],
}

OMEGA_SCHEMA = {
    "type": "object",
    "required": ["atoms"],
    "properties": {"atoms": {"type": "array", "items": {"type": "integer", "minimum": 0}, "uniqueItems": True}},
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "method": {"enum": ["projected_gradient", "frank_wolfe", "annealing"]},
        "max_iters": {"type": "integer", "minimum": 0},
        "step": {"type": ["number", "null"]},
        "h_fd": {"type": "number", "exclusiveMinimum": 0},
        "trace_penalty": {"type": "number", "minimum": 0},
        "bound_penalty": {"type": "number", "minimum": 0},
        "trace_target": {"type": ["number", "null"]},
        "trace_tol": {"type": "number", "minimum": 0},
        "tol": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "point_mode": {"enum": ["full", "scale", "fixed"]},
        "temperature": {"type": "number", "minimum": 0},
        "stall_iters": {"type": "integer", "minimum": 1},
        "stop_on": {"enum": ["el", "objective"]},
        "kappa": {"type": "number", "minimum": 0},
        "nu": {"type": ["number", "null"]},
        "bound_C": {"type": ["number", "null"]},
        "probes": {"type": "integer", "minimum": 0},
        "probe_radius": {"type": ["number", "null"]},
    },
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["masses"],
    "properties": {
        "kind": {"enum": ["sampled", "smooth"]},
        "masses": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "curves": {
            "type": "object",
            "required": ["q2", "a", "b"],
            "properties": {k: {"type": "array", "items": _num, "minItems": 2} for k in ("q2", "a", "b")},
        },
        "slopes": {"type": "array", "items": {
            "type": "object", "required": ["below", "above"],
            "properties": {"below": _num, "above": _num}}},
        "curvature": _num,
        "floor": _num,
        "a0": _num,
    },
    "if": {"properties": {"kind": {"const": "smooth"}}, "required": ["kind"]},
    "else": {"required": ["curves"]},
}

PACKET_SCHEMA = {
    "type": "object",
    "required": ["mass"],
    "properties": {
        "mass": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": _num,
        "spinor": {"type": "array", "items": _pair, "minItems": 4, "maxItems": 4},
        "generation": {"type": "integer", "minimum": 0},
    },
}

LEMMA_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"const": "gaussian"},
        "scale": _num,
        "dims": {"type": "array", "items": {"enum": [1, 2, 3]}, "minItems": 1},
        "grid": {"type": "object"},
    },
    "additionalProperties": False,
}


def _validate(doc, schema, what: str):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{what}: {exc.message} (at '{path}')") from None


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg}, line {exc.lineno})") from None
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror}") from None


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def encode_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(doc) -> np.ndarray:
    arr = np.asarray(doc, dtype=float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise SchemaError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# ------------------------------------------------------------ systems

def _kernel_from(doc: dict) -> CompactKernel:
    kind = doc["kind"]
    if kind == "diagonal":
        if "m" not in doc:
            raise SchemaError("diagonal kernel needs 'm'")
        return diagonal_kernel(int(doc["m"]))
    if kind == "constant":
        return constant_kernel(float(doc.get("value", 1.0)), int(doc.get("m", 1)))
    try:
        return matrix_kernel(doc["matrix"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"matrix kernel: {exc}") from None


def _kernel_doc(kernel: CompactKernel) -> dict:
    name = kernel.name
    if name.startswith("diagonal:"):
        return {"kind": "diagonal", "m": int(name.split(":")[1])}
    if name.startswith("constant:"):
        return {"kind": "constant", "value": float(name.split(":")[1])}
    if name == "matrix":
        labels = kernel.sampler(None, 0)
        return {"kind": "matrix", "matrix": kernel.matrix(labels).tolist()}
    raise ValueError(f"kernel '{name}' has no JSON form")


def system_from_dict(doc: dict) -> DiscreteMeasure:
    _validate(doc, SYSTEM_SCHEMA, "system")
    weights = np.asarray(doc["weights"], dtype=float)
    if len(weights) != len(doc["points"]):
        raise SchemaError("system: one weight per point required")
    if "total_volume" in doc:
        vol = float(doc["total_volume"])
        if abs(weights.sum() - vol) > 1e-12 * max(1.0, vol):
            raise SchemaError(f"system: weights sum to {weights.sum()!r}, total_volume is {vol!r}")
    if doc["mode"] == "compact":
        kernel = _kernel_from(doc["kernel"])
        if doc["kernel"]["kind"] == "diagonal":
            bad = [p for p in doc["points"] if p >= doc["kernel"]["m"]]
            if bad:
                raise SchemaError(f"system: labels {bad} outside the diagonal kernel")
        return DiscreteMeasure([int(p) for p in doc["points"]], weights, kernel)
    points = []
    for k, p in enumerate(doc["points"]):
        psi = decode_complex(p["psi"])
        if psi.ndim != 2 or psi.shape[0] % 2:
            raise SchemaError(f"system: point {k} psi must be a (2n, f) matrix")
        points.append(CfsPoint(psi))
    if points:
        rows, cols = points[0].psi.shape
        if "n" in doc and 2 * doc["n"] != rows:
            raise SchemaError("system: psi row count does not match 2n")
        if "f" in doc and doc["f"] != cols:
            raise SchemaError("system: psi column count does not match f")
    try:
        return DiscreteMeasure(points, weights)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"system: {exc}") from None


def system_to_dict(m: DiscreteMeasure) -> dict:
    out = {"mode": m.mode, "weights": [float(w) for w in m.weights], "total_volume": m.total_volume}
    if m.mode == "compact":
        out["kernel"] = _kernel_doc(m.kernel)
        out["points"] = [int(p) for p in m.points]
        return out
    out["n"] = m.spin_dim
    out["f"] = m.hilbert_dim
    out["points"] = [{"psi": encode_complex(p.psi)} for p in m.points]
    return out


def load_system(path) -> DiscreteMeasure:
    return system_from_dict(read_json(path))


# ------------------------------------------------------------ variations and regions

def _path_point(doc, mode: str):
    if mode == "compact":
        return int(doc)
    return CfsPoint(decode_complex(doc))


def variation_from_dict(doc: dict, m: DiscreteMeasure) -> Variation | KillingVariation:
    _validate(doc, VARIATION_SCHEMA, "variation")
    kind = doc["kind"]
    try:
        if kind == "identity":
            return Identity()
        if kind == "unitary":
            if m.mode != "cfs":
                raise SchemaError("variation: unitary conjugation needs a CFS system")
            gen = decode_complex(doc["generator"])
            if gen.shape != (m.hilbert_dim, m.hilbert_dim):
                raise SchemaError(f"variation: generator must be {m.hilbert_dim}x{m.hilbert_dim}")
            return UnitaryConjugation(gen, float(doc.get("tau_max", 1.0)))
        if kind == "permutation":
            if len(doc["perm"]) != len(m.points):
                raise SchemaError("variation: perm must list every atom")
            return PointFlow.permutation(m.points, doc["perm"], float(doc.get("step", 1.0)),
                                         int(doc.get("reach", 2)))
        if kind == "table":
            paths = doc["paths"]
            if len(paths) != len(m.points) or any(len(row) != len(doc["taus"]) for row in paths):
                raise SchemaError("variation: paths must have one row per atom and one entry per tau")
            rows = [[_path_point(p, m.mode) for p in row] for row in paths]
            return PointFlow(taus=doc["taus"], points=rows)
        flow = variation_from_dict(doc["flow"], m)
        unit = variation_from_dict(doc["unitary"], m)
        if not isinstance(unit, UnitaryConjugation):
            raise SchemaError("variation: killing 'unitary' must be of kind unitary")
        K = decode_complex(doc["K"]) if "K" in doc else None
        return KillingVariation(flow, unit, K)
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(f"variation: {exc}") from None


def load_variation(path, m: DiscreteMeasure):
    return variation_from_dict(read_json(path), m)


def omega_from_dict(doc: dict, m: DiscreteMeasure) -> list[int]:
    _validate(doc, OMEGA_SCHEMA, "omega")
    atoms = sorted(int(a) for a in doc["atoms"])
    if atoms and atoms[-1] >= len(m.points):
        raise SchemaError(f"omega: atom {atoms[-1]} out of range")
    return atoms


def load_omega(path, m: DiscreteMeasure) -> list[int]:
    return omega_from_dict(read_json(path), m)


# ------------------------------------------------------------ configs

_ACTION_KEYS = ("kappa", "nu", "bound_C", "probes", "probe_radius")


def config_from_dict(doc: dict, seed: int | None = None):
    """(OptimizerConfig, ActionParams); the seed argument overrides the file."""
    _validate(doc, CONFIG_SCHEMA, "config")
    opt = {k: v for k, v in doc.items() if k not in _ACTION_KEYS}
    act = {k: v for k, v in doc.items() if k in _ACTION_KEYS}
    if seed is not None:
        opt["seed"] = seed
    act["seed"] = opt.get("seed", 0)
    try:
        return OptimizerConfig(**opt), ActionParams(**act)
    except ValueError as exc:
        raise SchemaError(f"config: {exc}") from None


def load_config(path, seed: int | None = None):
    return config_from_dict(read_json(path) if path else {}, seed)


def load_model(path) -> QhatModel:
    doc = read_json(path)
    _validate(doc, MODEL_SCHEMA, "model")
    try:
        return model_from_dict(doc)
    except ValueError as exc:
        raise SchemaError(f"model: {exc}") from None


def load_packet(path) -> WavePacket:
    doc = read_json(path)
    _validate(doc, PACKET_SCHEMA, "packet")
    try:
        return WavePacket.from_dict(doc)
    except ValueError as exc:
        raise SchemaError(f"packet: {exc}") from None


def load_lemma(path) -> dict:
    doc = read_json(path) if path else {}
    _validate(doc, LEMMA_SCHEMA, "lemma")
    grid = doc.get("grid", {})
    known = set(LemmaGrid.__dataclass_fields__)
    if set(grid) - known:
        raise SchemaError(f"lemma: unknown grid fields {sorted(set(grid) - known)}")
    return {
        "scale": float(doc.get("scale", 1.0)),
        "dims": list(doc.get("dims", [1, 3])),
        "grid": LemmaGrid(**grid),
    }


def grid_from_dict(doc: dict | None) -> Grid:
    doc = doc or {}
    known = set(Grid.__dataclass_fields__)
    if set(doc) - known:
        raise SchemaError(f"grid: unknown fields {sorted(set(doc) - known)}")
    return Grid(**doc)
