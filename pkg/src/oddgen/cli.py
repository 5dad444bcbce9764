"""Command-line front end: verify | residual | family | identify | search | gauge.

Exit codes: 0 success (verify: Einstein), 1 verify found a nonzero residual,
2 invalid input or violated constraint.
"""
from __future__ import annotations

import argparse
import os
import re
import sys
from fractions import Fraction

import numpy as np

from . import atlas, solver
from .canon import gauge_reduce
from .curvature import ricci_closed_form
from .dorfman import TwistingData
from .einstein import Scene, einstein_residual, is_einstein
from .numeric import BACKENDS, RATIONAL, Surd, default_tol
from .sceneio import (SchemaError, dumps, emit_report, emit_scene, parse_scene, report_doc,
                      residual_csv)

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2

_SURD = re.compile(r"^\s*(?:([-+]?[0-9./]+)\s*\*\s*)?(-)?sqrt\(\s*(\d+)\s*\)\s*$")


class UsageError(ValueError):
    pass


def parse_number(text: str, exact: bool):
    """'2', '-1/3', '0.25', 'sqrt(2)', '-3/2*sqrt(5)'."""
    m = _SURD.match(text)
    try:
        if m:
            coef = Fraction(m.group(1) or 1) * (-1 if m.group(2) else 1)
            v = Surd.sqrt_of(int(m.group(3)), coef)
        else:
            v = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot read {text!r} as a number") from None
    return v if exact else float(v)


def parse_params(text: str, exact: bool) -> dict:
    """'eps=1,1,1;a1=2;h=-1' -> {'eps': (1, 1, 1), 'a1': 2, 'h': -1}."""
    out: dict = {}
    for part in filter(None, (p.strip() for p in (text or "").split(";"))):
        if "=" not in part:
            raise UsageError(f"parameter {part!r} is not of the form name=value")
        name, value = (s.strip() for s in part.split("=", 1))
        if name in out:
            raise UsageError(f"parameter {name} given twice")
        if name == "eps":
            try:
                out[name] = tuple(int(v) for v in value.split(","))
            except ValueError:
                raise UsageError("eps is written as e.g. eps=1,1,-1") from None
        elif name in atlas.SIGN_NAMES:
            try:
                out[name] = int(value)
            except ValueError:
                raise UsageError(f"{name} must be +1 or -1") from None
        else:
            out[name] = parse_number(value, exact)
    return out


def _backend(args) -> str:
    b = os.environ.get("OGE_BACKEND") or getattr(args, "backend", None) or RATIONAL
    if b not in BACKENDS:
        raise UsageError(f"unknown backend {b!r}; choose from {', '.join(BACKENDS)}")
    return b


def _tol(args, backend):
    if getattr(args, "tol", None) is None:
        return default_tol(backend == RATIONAL)
    t = parse_number(args.tol, backend == RATIONAL)
    if t < 0:
        raise UsageError("--tol must be nonnegative")
    return t


def _load(path: str, backend: str) -> Scene:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return parse_scene(text, backend)


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _fmt(v) -> str:
    return str(v) if isinstance(v, (Fraction, Surd)) else repr(float(v))


# --- verbs ---------------------------------------------------------------------

def cmd_verify(args) -> int:
    backend = _backend(args)
    scene = _load(args.scene, backend)
    tol = _tol(args, backend)
    res = einstein_residual(scene)
    ok = is_einstein(scene, tol)
    print(f"verdict: {'einstein' if ok else 'not einstein'}")
    print(f"norm: {_fmt(res.norm)}")
    if args.report:
        ric = ricci_closed_form(scene.dorfman(), scene.twist, scene.delta)
        _write(emit_report(report_doc(res, backend, tol, ok, ric)), args.report)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_residual(args) -> int:
    backend = _backend(args)
    scene = _load(args.scene, backend)
    tol = _tol(args, backend)
    res = einstein_residual(scene)
    if args.format == "csv":
        _write(residual_csv(res), args.out)
        return EXIT_OK
    ric = ricci_closed_form(scene.dorfman(), scene.twist, scene.delta) if args.ricci else None
    _write(emit_report(report_doc(res, backend, tol, is_einstein(scene, tol), ric)), args.out)
    return EXIT_OK


def cmd_family(args) -> int:
    if args.list:
        for fid in atlas.FAMILY_IDS:
            print(fid)
        return EXIT_OK
    if not args.id:
        raise UsageError("family id required (see --list)")
    backend = _backend(args)
    exact = backend == RATIONAL
    if args.sample is not None:
        params = atlas.sample_params(args.id, np.random.default_rng(args.sample))
    else:
        params = parse_params(args.params, exact)
    try:
        scene = atlas.generate_family(args.id, params, exact=exact)
    except KeyError as e:
        raise UsageError(e.args[0]) from None
    _write(emit_scene(scene), args.emit)
    return EXIT_OK


def cmd_identify(args) -> int:
    backend = _backend(args)
    scene = _load(args.scene, backend)
    print(atlas.identify(scene.alg))
    return EXIT_OK


def cmd_search(args) -> int:
    exact = False
    eps = None if args.eps is None else tuple(int(v) for v in args.eps.split(","))
    frozen = {k: float(v) for k, v in parse_params(args.freeze, exact).items()}
    try:
        ans = solver.Ansatz.make(args.ansatz, eps, eta=args.eta, frozen=frozen, box=args.box)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.starts < 1:
        raise UsageError("--starts must be >= 1")
    rep = solver.solve(ans, starts=args.starts, seed=args.seed, tol=float(args.tol))
    _write(dumps(rep.to_dict()), args.out)
    print(f"{len(rep.roots)} distinct roots, {rep.converged} converged starts, "
          f"matched fraction {rep.matched_fraction:.3f}", file=sys.stderr)
    return EXIT_OK


def _form(text: str, degree: int, n: int, exact: bool) -> np.ndarray:
    from .numeric import zeros
    out = zeros((n,) * degree, exact)
    if degree == 1:
        vals = [v for v in (text or "").split(",") if v.strip()]
        if vals and len(vals) != n:
            raise UsageError(f"--A needs {n} comma-separated values")
        for i, v in enumerate(vals):
            out[i] = parse_number(v, exact)
        return out
    for part in filter(None, (p.strip() for p in (text or "").split(";"))):
        try:
            idx, v = part.split("=")
            a, b = (int(s) - 1 for s in idx.split(","))
        except ValueError:
            raise UsageError("--b entries are written a,b=value separated by ';'") from None
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise UsageError(f"--b index pair {idx} invalid for n = {n}")
        val = parse_number(v, exact)
        out[a, b] = val
        out[b, a] = -val
    return out


def cmd_gauge(args) -> int:
    backend = _backend(args)
    exact = backend == RATIONAL
    scene = _load(args.scene, backend)
    n = scene.n
    b = _form(args.b, 2, n, exact)
    A = _form(args.A, 1, n, exact)
    H, F = gauge_reduce(None, b, A, scene.twist.H, scene.twist.F, scene.alg)
    _write(emit_scene(scene.with_twist(TwistingData(H, F))), args.emit)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oddgen", description="Odd generalized Einstein metrics on 3-dimensional Lie groups.")
    sub = p.add_subparsers(dest="verb", required=True)

    def backend(sp):
        sp.add_argument("--backend", choices=BACKENDS, default=None,
                        help="numeric backend (default rational; OGE_BACKEND overrides)")

    sp = sub.add_parser("verify", help="exit 0 if the scene is Einstein, 1 if not")
    sp.add_argument("scene")
    sp.add_argument("--tol", default=None)
    sp.add_argument("--report", default=None, help="also write a JSON report here")
    backend(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("residual", help="print the residual groups")
    sp.add_argument("scene")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--ricci", action="store_true", help="include Ricci components (json)")
    sp.add_argument("--tol", default=None)
    sp.add_argument("--out", default=None)
    backend(sp)
    sp.set_defaults(func=cmd_residual)

    sp = sub.add_parser("family", help="emit a scene of a classified family")
    sp.add_argument("id", nargs="?")
    sp.add_argument("--params", default="")
    sp.add_argument("--sample", type=int, default=None, help="random admissible parameters from this seed")
    sp.add_argument("--emit", default=None)
    sp.add_argument("--list", action="store_true")
    backend(sp)
    sp.set_defaults(func=cmd_family)

    sp = sub.add_parser("identify", help="print the isomorphism class of the Lie algebra")
    sp.add_argument("scene")
    backend(sp)
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("search", help="multistart solver run; writes a JSON report")
    sp.add_argument("--ansatz", choices=solver.KINDS, required=True)
    sp.add_argument("--eps", default=None, help="frame signs, e.g. 1,1,-1")
    sp.add_argument("--eta", type=int, choices=(1, -1), default=1)
    sp.add_argument("--freeze", default="", help="fixed variables, e.g. 'alpha=1;beta=2'")
    sp.add_argument("--starts", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--box", type=float, default=5.0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("gauge", help="apply the (b, A) gauge transformation to H and F")
    sp.add_argument("scene")
    sp.add_argument("--b", default="", help="2-form entries 'a,b=value;...'")
    sp.add_argument("--A", default="", help="1-form components 'v1,...,vn'")
    sp.add_argument("--emit", default=None)
    backend(sp)
    sp.set_defaults(func=cmd_gauge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        return args.func(args)
    except SchemaError as e:
        print(f"invalid scene: {e}", file=sys.stderr)
    except atlas.FamilyConstraintError as e:
        print(f"constraint violated: {e}", file=sys.stderr)
    except (UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
