"""JSON scene and report documents.

Values are encoded as JSON integers, JSON floats (float backend), strings
"p/q" for non-integral rationals, or {"sqrt": m, "coef": q[, "plus": p]} for
p + q*sqrt(m).  Decimal literals read on the rational backend are exact.
The emitter is canonical, so emit -> parse -> emit is byte-identical.
"""
from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction

import numpy as np

from .connection import DivergenceOperator
from .dorfman import MetricLieAlgebra, TwistingData
from .einstein import EinsteinResidual, InvalidSceneError, Scene
from .frame import build_frame
from .numeric import FLOAT, RATIONAL, Surd, default_tol, zeros

SCENE_KEYS = ("n", "epsilon", "k", "H", "F", "delta")


class SchemaError(ValueError):
    """Malformed document; the message starts with the offending field."""

    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _no_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise SchemaError(k, "duplicate key")
        out[k] = v
    return out


class _Literal(str):
    """Raw text of a JSON float literal, converted later per backend."""


def parse_json(text: str):
    try:
        return json.loads(text, parse_float=_Literal, object_pairs_hook=_no_duplicate_keys)
    except json.JSONDecodeError as e:
        raise SchemaError("document", f"invalid JSON ({e})") from None


# --- values --------------------------------------------------------------------

def encode_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("non-finite value")
        return v
    if isinstance(v, Surd):
        out = {"sqrt": v.m, "coef": encode_value(v.b)}
        if v.a:
            out["plus"] = encode_value(v.a)
        return out
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("boolean is not a number")
    q = Fraction(v)
    if q.denominator == 1:
        return q.numerator
    return f"{q.numerator}/{q.denominator}"


def decode_value(raw, backend: str, field: str):
    exact = backend == RATIONAL
    if isinstance(raw, bool) or raw is None:
        raise SchemaError(field, f"expected a number, got {json.dumps(raw)}")
    if isinstance(raw, _Literal):
        return Fraction(str(raw)) if exact else float(raw)
    if isinstance(raw, int):
        return Fraction(raw) if exact else float(raw)
    if isinstance(raw, str):
        try:
            q = Fraction(raw)
        except (ValueError, ZeroDivisionError):
            raise SchemaError(field, f"cannot read {raw!r} as a rational") from None
        return q if exact else float(q)
    if isinstance(raw, dict):
        extra = set(raw) - {"sqrt", "coef", "plus"}
        if "sqrt" not in raw or extra:
            raise SchemaError(field, "a surd is written {\"sqrt\": m, \"coef\": q[, \"plus\": p]}")
        m = raw["sqrt"]
        if isinstance(m, bool) or not isinstance(m, int) or m < 0:
            raise SchemaError(field, "sqrt needs a nonnegative integer")
        coef = decode_value(raw.get("coef", 1), RATIONAL, field)
        plus = decode_value(raw.get("plus", 0), RATIONAL, field)
        val = Surd.sqrt_of(m, coef) + plus
        if isinstance(val, Surd) and val.b == 0:
            val = Fraction(val.a)
        return val if exact else float(val)
    raise SchemaError(field, f"expected a number, got {json.dumps(raw)}")


# --- canonical emitter ---------------------------------------------------------

def _dump(obj, indent: int) -> str:
    flat = json.dumps(obj)
    if len(flat) + indent <= 88 or not isinstance(obj, (list, dict)) or not obj:
        return flat
    pad = " " * (indent + 2)
    if isinstance(obj, list):
        body = ",\n".join(pad + _dump(x, indent + 2) for x in obj)
        return "[\n" + body + "\n" + " " * indent + "]"
    body = ",\n".join(f"{pad}{json.dumps(k)}: {_dump(v, indent + 2)}" for k, v in obj.items())
    return "{\n" + body + "\n" + " " * indent + "}"


def dumps(doc: dict) -> str:
    return _dump(doc, 0) + "\n"


# --- scenes --------------------------------------------------------------------

def scene_to_doc(scene: Scene) -> dict:
    n = scene.n
    k, H, F = scene.alg.k, scene.twist.H, scene.twist.F
    doc = {"n": n, "epsilon": list(scene.alg.epsilon)}
    doc["k"] = [[a + 1, b + 1, c + 1, encode_value(k[a, b, c])]
                for a, b in itertools.combinations(range(n), 2) for c in range(n) if k[a, b, c] != 0]
    doc["H"] = [[a + 1, b + 1, c + 1, encode_value(H[a, b, c])]
                for a, b, c in itertools.combinations(range(n), 3) if H[a, b, c] != 0]
    doc["F"] = [[a + 1, b + 1, encode_value(F[a, b])]
                for a, b in itertools.combinations(range(n), 2) if F[a, b] != 0]
    doc["delta"] = [encode_value(v) for v in scene.delta.delta]
    return doc


def emit_scene(scene: Scene) -> str:
    return dumps(scene_to_doc(scene))


def _index(raw, n, field):
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise SchemaError(field, f"index {json.dumps(raw)} is not an integer")
    if not 1 <= raw <= n:
        raise SchemaError(field, f"index {raw} out of range 1..{n}")
    return raw - 1


def _entries(doc, key, arity, n, backend):
    rows = doc.get(key, [])
    if not isinstance(rows, list):
        raise SchemaError(key, "expected an array of entries")
    seen = {}
    out = []
    for pos, row in enumerate(rows):
        field = f"{key}[{pos}]"
        if not isinstance(row, list) or len(row) != arity + 1:
            raise SchemaError(field, f"expected [{', '.join('abc'[:arity])}, value]")
        idx = tuple(_index(i, n, field) for i in row[:arity])
        val = decode_value(row[arity], backend, field)
        if key == "k":
            if idx[0] == idx[1]:
                if val != 0:
                    raise SchemaError(field, "k_aac must vanish (the bracket is antisymmetric)")
                continue
            canon = (min(idx[:2]), max(idx[:2]), idx[2])
        else:
            if len(set(idx)) < arity:
                if val != 0:
                    raise SchemaError(field, "repeated index in an antisymmetric form")
                continue
            canon = tuple(sorted(idx))
        if canon in seen:
            raise SchemaError(field, f"duplicate entry (same components as {key}[{seen[canon]}])")
        seen[canon] = pos
        out.append((idx, val))
    return out


def scene_from_doc(doc, backend: str = RATIONAL) -> Scene:
    if backend not in (RATIONAL, FLOAT):
        raise ValueError(f"unknown backend {backend!r}")
    if not isinstance(doc, dict):
        raise SchemaError("document", "expected a JSON object")
    unknown = set(doc) - set(SCENE_KEYS)
    if unknown:
        raise SchemaError(sorted(unknown)[0], "unknown field")
    for key in ("n", "epsilon", "delta"):
        if key not in doc:
            raise SchemaError(key, "missing")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("n", "expected a positive integer")
    eps = doc["epsilon"]
    if not isinstance(eps, list) or len(eps) != n or any(e not in (1, -1) or isinstance(e, bool) for e in eps):
        raise SchemaError("epsilon", f"expected {n} entries, each +1 or -1")
    exact = backend == RATIONAL
    frame, _ = build_frame(n, eps)
    k = zeros((n, n, n), exact)
    for (a, b, c), v in _entries(doc, "k", 3, n, backend):
        k[a, b, c] = v
        k[b, a, c] = -v
    H = zeros((n, n, n), exact)
    for idx, v in _entries(doc, "H", 3, n, backend):
        for p in itertools.permutations(range(3)):
            sgn = 1 if p in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1
            H[tuple(idx[q] for q in p)] = sgn * v
    F = zeros((n, n), exact)
    for (a, b), v in _entries(doc, "F", 2, n, backend):
        F[a, b] = v
        F[b, a] = -v
    d = doc["delta"]
    if not isinstance(d, list) or len(d) != 2 * n + 1:
        raise SchemaError("delta", f"expected {2 * n + 1} entries (index 0 is delta_0)")
    dvals = [decode_value(v, backend, f"delta[{i}]") for i, v in enumerate(d)]
    delta = np.array(dvals, dtype=object if exact else float)
    alg = MetricLieAlgebra(frame, k)
    tol = default_tol(exact)
    if not alg.satisfies_jacobi(tol):
        raise SchemaError("k", "structure coefficients violate the Jacobi identity")
    try:
        return Scene(alg, TwistingData(H, F), DivergenceOperator(delta))
    except InvalidSceneError as e:
        field = "F" if "F is not closed" in str(e) else "H"
        raise SchemaError(field, str(e)) from None


def parse_scene(text: str, backend: str = RATIONAL) -> Scene:
    return scene_from_doc(parse_json(text), backend)


# --- reports -------------------------------------------------------------------

def report_doc(res: EinsteinResidual, backend: str, tol, verdict: bool, ricci=None) -> dict:
    groups: dict = {g: [] for g in ("G1", "G2", "G3", "G4")}
    for g, i, a, v in res.rows():
        groups[g].append([i, a, encode_value(v)])
    doc = {"backend": backend, "tolerance": encode_value(tol), "norm": encode_value(res.norm),
           "verdict": "einstein" if verdict else "not einstein", "groups": groups}
    if ricci is not None:
        n = ricci.frame.n
        doc["ricci"] = {
            "plus": [[i + n + 1, a, encode_value(ricci.plus[i, a])] for i in range(n) for a in range(n + 1)],
            "minus": [[a, i + n + 1, encode_value(ricci.minus[i, a])] for i in range(n) for a in range(n + 1)],
        }
    return doc


def emit_report(doc: dict) -> str:
    return dumps(doc)


def parse_report(text: str) -> dict:
    """Report document with values decoded on the backend it was written with."""
    doc = parse_json(text)
    backend = doc.get("backend", RATIONAL)

    def dec(v, field):
        return decode_value(v, backend, field)

    out = dict(doc)
    out["tolerance"] = dec(doc["tolerance"], "tolerance")
    out["norm"] = dec(doc["norm"], "norm")
    out["groups"] = {g: [[i, a, dec(v, g)] for i, a, v in rows] for g, rows in doc["groups"].items()}
    if "ricci" in doc:
        out["ricci"] = {s: [[i, a, dec(v, s)] for i, a, v in rows] for s, rows in doc["ricci"].items()}
    return out


def report_from_parsed(parsed: dict) -> dict:
    """Inverse of ``parse_report``: re-encode the values."""
    out = dict(parsed)
    out["tolerance"] = encode_value(parsed["tolerance"])
    out["norm"] = encode_value(parsed["norm"])
    out["groups"] = {g: [[i, a, encode_value(v)] for i, a, v in rows] for g, rows in parsed["groups"].items()}
    if "ricci" in parsed:
        out["ricci"] = {s: [[i, a, encode_value(v)] for i, a, v in rows] for s, rows in parsed["ricci"].items()}
    return out


def residual_csv(res: EinsteinResidual) -> str:
    lines = ["group,i,a,value"]
    for g, i, a, v in res.rows():
        lines.append(f"{g},{i},{a},{_csv_value(v)}")
    return "\n".join(lines) + "\n"


def _csv_value(v) -> str:
    if isinstance(v, Surd):
        return f"{v.a}+{v.b}*sqrt({v.m})" if v.a else f"{v.b}*sqrt({v.m})"
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))
