"""Classified odd generalized Einstein families on 3-dimensional Lie groups,
membership tests, and identification of the underlying Lie algebra."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .canon import (L1, L3, L5, NonUnimodularParams, bracket_from_L, bracket_nonunimodular,
                    canonical_tag, derived_algebra_basis, extract_L, killing_form, nullspace,
                    rank, signature)
from .connection import DivergenceOperator
from .dorfman import MetricLieAlgebra, TwistingData
from .einstein import Scene, einstein_residual
from .numeric import Surd, asarray, default_tol, exact_sqrt, is_exact, max_abs, sign, to_exact, to_float

SQRT2 = Surd(0, 1, 2)
SQRT3 = Surd(0, 1, 3)


class FamilyConstraintError(ValueError):
    """Parameters violating a defining relation or inequality of a family."""


# --- Lie algebra labels -------------------------------------------------------

@dataclass(frozen=True)
class LieLabel:
    name: str
    param: object = None

    def __str__(self):
        if self.param is None:
            return self.name
        return f"{self.name}({_fmt(self.param)})"

    def same_class(self, other: "LieLabel") -> bool:
        return self.name == other.name


def _fmt(v):
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


ABELIAN, HEIS = LieLabel("abelian"), LieLabel("heis")
E2, E11 = LieLabel("e(2)"), LieLabel("e(1,1)")
SO3, SO21 = LieLabel("so(3)"), LieLabel("so(2,1)")
TAU2 = LieLabel("tau2+R")
TAU3 = LieLabel("tau3")


def tau3l(lam) -> LieLabel:
    return LieLabel("tau3", lam) if lam is not None else TAU3


def _tol(exact: bool, tol=None):
    return (Fraction(0) if exact else 1e-9) if tol is None else tol


def identify_unimodular(alg: MetricLieAlgebra, tol=None) -> LieLabel:
    if alg.n != 3:
        raise ValueError("identification is implemented for n = 3")
    exact = alg.exact
    tol = _tol(exact, tol)
    if not alg.is_unimodular(tol):
        raise ValueError("algebra is not unimodular")
    D = derived_algebra_basis(alg)
    dim = D.shape[0] if D.size else 0
    if dim == 0:
        return ABELIAN
    if dim == 1:
        return HEIS
    K = killing_form(alg)
    if dim == 3:
        pos, neg, _ = signature(K)
        return SO3 if neg == 3 else SO21
    # dim 2: evaluate K on a vector outside [g, g]
    for a in range(3):
        x = np.zeros(3, dtype=object if exact else float)
        x[a] = 1
        M = np.vstack([D, x[None, :]])
        if rank(M) == 3:
            val = x @ K @ x
            return E2 if sign(val) < 0 else E11
    raise AssertionError("no complement of the derived algebra found")


def _ad_on(alg: MetricLieAlgebra, x, basis):
    """Matrix of ad_x on span(basis), assuming that span is ad_x invariant."""
    c = alg.structure_constants()
    exact = alg.exact
    U = np.array(basis, dtype=object if exact else float)  # rows
    cols = []
    for u in U:
        y = np.einsum("a,b,abd->d", x, u, c)
        cols.append(_solve_rows(U, y, exact))
    return np.array(cols, dtype=U.dtype).T


def _solve_rows(U, y, exact):
    """Coefficients w with w @ U = y."""
    if not exact:
        w, *_ = np.linalg.lstsq(U.T.astype(float), y.astype(float), rcond=None)
        return w
    # 2 x 3 system: pick two independent columns
    for i, j in itertools.combinations(range(U.shape[1]), 2):
        det = U[0, i] * U[1, j] - U[0, j] * U[1, i]
        if det != 0:
            w0 = (y[i] * U[1, j] - y[j] * U[1, i]) / det
            w1 = (U[0, i] * y[j] - U[0, j] * y[i]) / det
            return np.array([w0, w1], dtype=object)
    raise ValueError("degenerate kernel basis")


def identify_nonunimodular(alg: MetricLieAlgebra, tol=None) -> LieLabel:
    if alg.n != 3:
        raise ValueError("identification is implemented for n = 3")
    exact = alg.exact
    tol = _tol(exact, tol)
    tr = alg.trace_form()
    if max_abs(tr) <= tol:
        raise ValueError("algebra is unimodular")
    basis = nullspace(tr.reshape(1, 3))
    a = max(range(3), key=lambda i: abs(tr[i]))
    x = np.zeros(3, dtype=object if exact else float)
    x[a] = 1 if tr[a] > 0 else -1
    A = _ad_on(alg, x, basis)
    return classify_A(A, tol)


def classify_A(A: np.ndarray, tol=None) -> LieLabel:
    """Class of R x_A R^2 from the 2x2 matrix A (nonzero trace)."""
    exact = is_exact(A)
    tol = _tol(exact, tol)
    t = A[0, 0] + A[1, 1]
    d = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    scale = max(abs(t) ** 2, abs(d), 1) if not exact else 1
    disc = t * t - 4 * d
    if abs(d) <= tol * scale:
        return TAU2
    if abs(disc) <= tol * scale:
        half = t / 2
        scalar = (abs(A[0, 0] - half) <= tol * (1 + abs(half)) and abs(A[1, 1] - half) <= tol * (1 + abs(half))
                  and abs(A[0, 1]) <= tol * (1 + abs(half)) and abs(A[1, 0]) <= tol * (1 + abs(half)))
        return LieLabel("tau3", to_exact(1) if exact else 1.0) if scalar else TAU3
    if disc > 0:
        try:
            r = exact_sqrt(disc) if exact else float(np.sqrt(disc))
        except ValueError:
            r = float(np.sqrt(float(disc)))
            t, exact = float(t), False
        x1, x2 = (t + r) / 2, (t - r) / 2
        big, small = (x1, x2) if abs(x1) >= abs(x2) else (x2, x1)
        return LieLabel("tau3", small / big)
    try:
        r = exact_sqrt(-disc) if exact else float(np.sqrt(-disc))
    except ValueError:
        r = float(np.sqrt(-float(disc)))
        t = float(t)
    return LieLabel("tau3'", abs(t) / r)


def identify(alg: MetricLieAlgebra, tol=None) -> LieLabel:
    tol = _tol(alg.exact, tol)
    if alg.is_unimodular(tol):
        return identify_unimodular(alg, tol)
    return identify_nonunimodular(alg, tol)


# --- parameter handling -------------------------------------------------------

class Params:
    """Free parameters plus optional given values of derived coordinates.

    ``fixed(name, value)`` returns the computed value and, when ``name`` was
    supplied, checks it.  ``root(name, square, sign)`` does the same for a
    quantity known through its square.
    """

    def __init__(self, values: dict, exact: bool, tol=None, family: str = ""):
        self.exact = exact
        self.tol = default_tol(exact) if tol is None else tol
        self.family = family
        self.given = {}
        for k, v in values.items():
            if k == "eps":
                self.given[k] = tuple(int(e) for e in v)
            elif k in SIGN_NAMES:
                self.given[k] = int(v)
            else:
                self.given[k] = self.num(v)
        self.out: dict = {}

    def num(self, v):
        if self.exact:
            return to_exact(v)
        return float(v)

    def fail(self, msg: str):
        raise FamilyConstraintError(f"{self.family}: {msg}")

    def require(self, cond: bool, msg: str):
        if not cond:
            self.fail(msg)

    def close(self, a, b) -> bool:
        if self.exact:
            return a == b
        return abs(a - b) <= self.tol * max(1.0, abs(a), abs(b))

    def zero(self, x) -> bool:
        return self.close(x, 0)

    def get(self, name: str, default=None):
        if name in self.given:
            v = self.given[name]
        elif default is not None:
            v = self.num(default)
        else:
            self.fail(f"missing parameter {name}")
        self.out[name] = v
        return v

    def sign(self, name: str, default: int = 1) -> int:
        v = self.given.get(name, default)
        self.require(v in (1, -1), f"{name} must be +1 or -1")
        self.out[name] = v
        return v

    def eps(self, pattern: str | tuple = "any") -> tuple[int, int, int]:
        """Frame signs; pattern 'L' forces eps1 = eps2 = -eps3, a tuple fixes them."""
        if isinstance(pattern, tuple) and "eps" not in self.given:
            e = pattern
        else:
            e = self.given.get("eps")
            if e is None:
                self.fail("missing parameter eps")
        self.require(len(e) == 3 and all(x in (1, -1) for x in e), "eps must be three signs")
        if pattern == "L":
            self.require(e[0] == e[1] == -e[2], "needs eps1 = eps2 = -eps3")
        elif isinstance(pattern, tuple):
            self.require(tuple(e) == pattern, f"needs eps = {pattern}")
        self.out["eps"] = tuple(e)
        return tuple(e)

    def fixed(self, name: str, value):
        value = self.num(value) if not isinstance(value, (Surd, Fraction, float)) else value
        if name in self.given:
            g = self.given[name]
            if not self.close(g, value):
                self.fail(f"{name} = {_fmt(g)} but the family forces {_fmt(value)}")
        self.out[name] = value
        return value

    def root(self, name: str, square, sign_name: str | None = None):
        """Value whose square is ``square`` (> 0)."""
        self.require(square > (0 if self.exact else -self.tol), f"{name}^2 = {_fmt(square)} must be positive")
        if name in self.given:
            g = self.given[name]
            if not self.close(g * g, square):
                self.fail(f"{name}^2 = {_fmt(g * g)} but the family forces {_fmt(square)}")
            self.require(not self.zero(g), f"{name} must be nonzero")
            self.out[name] = g
            return g
        s = self.sign(sign_name or f"s{name}")
        r = exact_sqrt(square) if self.exact else float(np.sqrt(max(square, 0.0)))
        v = r if s > 0 else -r
        self.out[name] = v
        return v


SIGN_NAMES = ("eta", "s", "t", "sF12", "sF13", "sF23", "sd0", "sd2", "sdelta")


# --- families -----------------------------------------------------------------

@dataclass(frozen=True)
class Family:
    id: str
    kind: str  # "L1", "L3", "L5", "deg", "nondeg"
    build: Callable[[Params], dict]
    sample: Callable[[np.random.Generator], dict]
    labels: Callable[[dict], object]
    signs: tuple = ()
    derive: Callable[[dict], dict] | None = None
    doc: str = ""


def _coords(p: Params, eps, h, F12, F13, F23, d, **alg) -> dict:
    """Fix the scene coordinates through p (checks them in membership mode)."""
    names = ("h", "F12", "F13", "F23") + tuple(f"d{i}" for i in range(7))
    vals = (h, F12, F13, F23) + tuple(d)
    out = {"eps": eps}
    for nme, v in zip(names, vals):
        out[nme] = p.fixed(nme, v)
    out.update(alg)
    return out


def _r(rng, lo=-12, hi=12, den=4, nonzero=False):
    while True:
        v = Fraction(int(rng.integers(lo, hi + 1)), int(rng.integers(1, den + 1)))
        if v != 0 or not nonzero:
            return v


def _pm(rng) -> int:
    return int(rng.choice([1, -1]))


# DIAG --------------------------------------------------------------------------

def _build_diag(p: Params) -> dict:
    e1, e2, e3 = p.eps()
    a1 = p.get("a1")
    a2 = p.get("a2")
    p.fixed("a3", a1)
    p.require(e2 * a2 * (a1 - a2) > 0, "eps2*a2*(a1 - a2) > 0 is violated")
    d0 = p.get("d0", 0)
    d5 = p.get("d5", 0)
    q = e2 * (a1 - a2) / a2
    if p.zero(d0):
        d0 = p.fixed("d0", 0)
        d2 = p.fixed("d2", 0)
        F13 = p.root("F13", e2 * a2 * (a1 - a2))
    else:
        d2 = p.root("d2", q * d0 * d0, "sd2")
        F13 = p.fixed("F13", e2 * a2 * d2 / d0)
    z = p.num(0)
    return _coords(p, (e1, e2, e3), -a2, z, F13, z, (d0, z, d2, z, z, d5, z),
                   L=L1(a1, a2, a1, p.exact))


def _sample_diag(rng) -> dict:
    eps = (_pm(rng), _pm(rng), _pm(rng))
    a2 = _r(rng, nonzero=True)
    if rng.random() < 0.5:
        t = _r(rng, nonzero=True)
        a1 = a2 + eps[1] * a2 * t * t
    else:
        a1 = a2 + eps[1] * sign(a2) * _r(rng, 1, 12)
    d0 = 0 if rng.random() < 0.4 else _r(rng, nonzero=True)
    return {"eps": eps, "a1": a1, "a2": a2, "d0": d0, "d5": _r(rng),
            "sF13": _pm(rng), "sd2": _pm(rng)}


def _labels_diag(c: dict):
    e1, e2, e3 = c["eps"]
    a1, a2 = c["a1"], c["a2"]
    if a1 == 0:
        return HEIS
    if e1 == e3 and sign(e2 * a2) == sign(e1 * a1):
        return SO3
    return SO21


# L3 ----------------------------------------------------------------------------

def _build_l3_1(p: Params) -> dict:
    eps = p.eps((-1, -1, 1))
    eta = p.sign("eta")
    a = p.get("alpha")
    p.require(not p.zero(a), "alpha != 0 is violated")
    b = p.fixed("beta", 2 * a)
    s = p.sign("s")
    z = p.num(0)
    r2 = SQRT2 if p.exact else float(np.sqrt(2))
    return _coords(p, eps, -2 * a, z, z, s * r2 * a, (z,) * 7, L=L3(eta, a, b, p.exact))


def _build_l3_2(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    eta = p.sign("eta")
    a, b = p.get("alpha"), p.get("beta")
    p.require(not p.close(b, 2 * a), "beta != 2 alpha is violated")
    p.require(e1 * b * (a - b) > 0, "eps1*beta*(alpha - beta) > 0 is violated")
    d0 = p.root("d0", e1 * b * (2 * a - b) ** 2 / (a - b), "sd0")
    F23 = b * (2 * a - b) / d0
    d1 = e1 * (b - 2 * a)
    z = p.num(0)
    return _coords(p, eps, -b, z, z, F23, (d0, d1, z, z, d1, z, z), L=L3(eta, a, b, p.exact))


def _build_l3_3(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    eta = p.sign("eta")
    a = p.get("alpha")
    b = p.fixed("beta", 0)
    p.require(e1 * a * eta < 0, "eps1*alpha*eta < 0 is violated")
    F12 = p.root("F12", -e1 * a * eta / 2)
    d1 = -e1 * a
    z = p.num(0)
    return _coords(p, eps, z, F12, F12, z, (z, d1, z, z, d1, z, z), L=L3(eta, a, b, p.exact))


def _build_l3_4(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    eta = p.sign("eta")
    a = p.get("alpha")
    b = p.fixed("beta", a)
    p.require(e1 * a * eta < 0, "eps1*alpha*eta < 0 is violated")
    F12 = p.root("F12", -e1 * a * eta / 2)
    d2 = p.get("d2", 0)
    d5 = p.get("d5", 0)
    d0 = e1 * a * d2 / F12
    z = p.num(0)
    return _coords(p, eps, -a, F12, F12, z, (d0, z, d2, d2, z, d5, d5), L=L3(eta, a, b, p.exact))


def _sample_l3(case):
    def sample(rng):
        e1 = _pm(rng)
        eps = (e1, e1, -e1)
        eta = _pm(rng)
        if case == 1:
            return {"eps": (-1, -1, 1), "eta": eta, "alpha": _r(rng, nonzero=True), "s": _pm(rng)}
        if case == 2:
            while True:
                a, b = _r(rng), _r(rng, nonzero=True)
                if b != 2 * a and e1 * b * (a - b) > 0:
                    return {"eps": eps, "eta": eta, "alpha": a, "beta": b, "sd0": _pm(rng)}
        a = _r(rng, nonzero=True)
        if e1 * a * eta > 0:
            a = -a
        out = {"eps": eps, "eta": eta, "alpha": a, "sF12": _pm(rng)}
        if case == 4:
            out.update(d2=_r(rng), d5=_r(rng))
        return out
    return sample


def _labels_l3(case):
    def labels(c):
        if case == 3:
            return E11
        a, b, eta = c["alpha"], c["beta"], c["eta"]
        if case == 2 and a == 0:
            return E2 if b * eta > 0 else E11
        return SO21
    return labels


# L5 ----------------------------------------------------------------------------

def _build_l5(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    a = p.fixed("alpha", 0)
    F12 = p.get("F12")
    p.require(not p.zero(F12), "F12 != 0 is violated")
    r2 = SQRT2 if p.exact else float(np.sqrt(2))
    d1 = -r2 * (e1 + F12 * F12)
    z = p.num(0)
    return _coords(p, eps, z, F12, z, -F12, (z, d1, z, d1, d1, z, d1), L=L5(a, p.exact))


def _sample_l5(rng):
    e1 = _pm(rng)
    return {"eps": (e1, e1, -e1), "F12": _r(rng, nonzero=True)}


# degenerate non-unimodular -----------------------------------------------------

def _deg_alg(p, eps, lam, mu, nu, rho):
    p.require(not p.zero(lam + rho), "lambda + rho != 0 is violated")
    return {"nu_params": NonUnimodularParams("degenerate", lam, mu, nu, rho, eps)}


def _build_deg1(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    lam, mu, rho = p.get("lam"), p.get("mu"), p.get("rho")
    nu = p.fixed("nu", 0)
    alg = _deg_alg(p, eps, lam, mu, nu, rho)
    d2 = p.get("d2")
    d5 = p.get("d5", d2)
    p.require(p.zero(rho * (d2 - d5)), "rho*(d2 - d5) = 0 is violated")
    F12 = p.root("F12", -e1 * (lam * lam + rho * rho) + rho * d2)
    z = p.num(0)
    return _coords(p, eps, z, F12, -F12, z, (z, z, d2, -d2, z, d5, -d5), **alg)


def _sample_deg1(rng):
    e1 = _pm(rng)
    while True:
        lam, mu, rho = _r(rng), _r(rng), _r(rng)
        if lam + rho == 0:
            continue
        if rho != 0:
            c = _r(rng, 1, 12)
            d2 = (e1 * (lam * lam + rho * rho) + c) / rho
            d5 = d2
        else:
            if e1 != -1:
                continue
            d2, d5 = _r(rng), _r(rng)
        return {"eps": (e1, e1, -e1), "lam": lam, "mu": mu, "rho": rho, "d2": d2, "d5": d5,
                "sF12": _pm(rng)}


def _build_deg2(p: Params) -> dict:
    eps = p.eps((-1, -1, 1))
    lam, mu, nu, rho = p.get("lam"), p.get("mu"), p.get("nu"), p.get("rho")
    p.require(not p.zero(nu), "nu != 0 is violated")
    alg = _deg_alg(p, eps, lam, mu, nu, rho)
    s = p.sign("s")
    d1 = p.get("d1", -nu)
    generic = not p.zero(lam * rho - mu * nu)
    if generic:
        d1 = p.fixed("d1", -nu)
        d4 = p.fixed("d4", d1)
    else:
        d4 = p.get("d4", d1)
    d3 = lam + rho + lam / nu * d1
    d6 = lam + rho + lam / nu * d4
    return _coords(p, eps, nu, -s * lam, s * lam, s * nu, (-s * d1, d1, -d3, d3, d4, -d6, d6), **alg)


def _sample_deg2(rng):
    while True:
        lam, nu, rho = _r(rng), _r(rng, nonzero=True), _r(rng)
        if lam + rho == 0:
            continue
        out = {"eps": (-1, -1, 1), "lam": lam, "nu": nu, "rho": rho, "s": _pm(rng)}
        if rng.random() < 0.5:
            out["mu"] = lam * rho / nu
            out["d1"], out["d4"] = _r(rng), _r(rng)
        else:
            mu = _r(rng)
            if lam * rho == mu * nu:
                continue
            out["mu"] = mu
        return out


def _build_deg_f0(p: Params) -> dict:
    e1, _, _ = eps = p.eps("L")
    lam, mu, rho = p.get("lam"), p.get("mu"), p.get("rho")
    nu = p.fixed("nu", 0)
    alg = _deg_alg(p, eps, lam, mu, nu, rho)
    p.require(not p.zero(rho), "rho != 0 is needed (otherwise mu*d1 + rho*d2 = eps1*lambda^2 has no solution)")
    if p.zero(lam):
        d1, d4 = p.get("d1", 0), p.get("d4", 0)
    else:
        d1, d4 = p.fixed("d1", 0), p.fixed("d4", 0)
    target = e1 * (lam * lam + rho * rho)
    d2 = (target - mu * d1) / rho
    d5 = (target - mu * d4) / rho
    d0 = p.get("d0", 0)
    z = p.num(0)
    return _coords(p, eps, z, z, z, z, (d0, d1, d2, -d2, d4, d5, -d5), **alg)


def _sample_deg_f0(rng):
    e1 = _pm(rng)
    while True:
        lam, mu, rho = _r(rng), _r(rng), _r(rng, nonzero=True)
        if rng.random() < 0.4:
            lam = Fraction(0)
        if lam + rho != 0:
            break
    out = {"eps": (e1, e1, -e1), "lam": lam, "mu": mu, "rho": rho, "d0": _r(rng)}
    if lam == 0:
        out.update(d1=_r(rng), d4=_r(rng))
    return out


def _labels_deg(which):
    def labels(c):
        lam, mu, nu, rho = c["lam"], c["mu"], c["nu"], c["rho"]
        if which == 2 and lam * rho == mu * nu:
            return TAU2
        allowed = {"tau2+R", "tau3"} if which != 2 else {"tau2+R", "tau3", "tau3'"}
        return allowed
    return labels


# nondegenerate non-unimodular ---------------------------------------------------

def _nd_alg(p, eps, lam, mu, nu, rho):
    e1, _, e3 = eps
    p.require(not p.zero(e1 * lam + e3 * rho), "eps1*lambda + eps3*rho != 0 is violated")
    return {"nu_params": NonUnimodularParams("nondegenerate", lam, mu, nu, rho, eps)}


def _build_nd1a(p: Params) -> dict:
    e1, e2, e3 = eps = p.eps()
    lam, mu = p.get("lam"), p.get("mu")
    nu, rho = p.fixed("nu", 0), p.fixed("rho", 0)
    p.require(not p.zero(lam), "lambda != 0 is violated")
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    F12 = p.root("F12", -(e1 * lam * lam + e3 * mu * mu))
    d3, d6 = p.get("d3", 0), p.get("d6", 0)
    d0 = e3 * mu * d3 / F12
    d2 = -e1 * lam
    z = p.num(0)
    return _coords(p, eps, mu, F12, z, z, (d0, z, d2, d3, z, d2, d6), **alg)


def _sample_nd1a(rng):
    while True:
        eps = (_pm(rng), _pm(rng), _pm(rng))
        lam, mu = _r(rng, nonzero=True), _r(rng)
        if eps[0] * lam * lam + eps[2] * mu * mu < 0:
            return {"eps": eps, "lam": lam, "mu": mu, "d3": _r(rng), "d6": _r(rng), "sF12": _pm(rng)}


def _build_nd1b(p: Params) -> dict:
    e2 = p.eps()[1]
    eps = p.eps((-1, e2, 1))
    lam = p.get("lam")
    p.require(not p.zero(lam), "lambda != 0 is violated")
    s, t = p.sign("s"), p.sign("t")
    mu = p.fixed("mu", 0)
    rho = p.fixed("rho", -2 * lam)
    nu = p.fixed("nu", 2 * s * lam)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    r3 = SQRT3 if p.exact else float(np.sqrt(3))
    z = p.num(0)
    return _coords(p, eps, mu, t * lam * r3, z, z, (z, z, lam, z, z, lam, z), **alg)


def _build_nd2(p: Params) -> dict:
    e2 = p.eps()[1]
    eps = p.eps((-1, e2, 1))
    mu = p.get("mu")
    p.require(not p.zero(mu), "mu != 0 is violated")
    s, t = p.sign("s"), p.sign("t")
    lam = p.fixed("lam", 0)
    nu = p.fixed("nu", -2 * mu)
    rho = p.fixed("rho", t * mu)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    z = p.num(0)
    return _coords(p, eps, mu, s * mu, z, s * rho, (z, z, -rho, z, z, -rho, z), **alg)


def _build_nd3(sub):
    def build(p: Params) -> dict:
        e1, e2, e3 = eps = p.eps()
        lam, mu, nu = p.get("lam"), p.get("mu"), p.get("nu")
        p.require(not p.zero(lam * nu), "lambda*nu != 0 is violated")
        rho = p.fixed("rho", mu * nu / lam)
        alg = _nd_alg(p, eps, lam, mu, nu, rho)
        p.require(e1 * lam * lam + e3 * mu * mu < 0, "eps1*lambda^2 + eps3*mu^2 < 0 is violated")
        F12 = p.root("F12", -(e1 * lam * lam + e3 * mu * mu))
        F23 = -nu / lam * F12
        d1, d4 = p.get("d1", 0), p.get("d4", 0)
        d0 = e1 * lam / nu * d1 * (nu - mu) / F12
        d2 = -(e1 * lam + e3 * rho)
        d3 = -e1 * e3 * lam / nu * d1
        d6 = -e1 * e3 * lam / nu * d4
        if sub == "a":
            p.require(p.close(d1, d4) and not p.zero(d1), "d1 = d4 != 0 is violated")
        elif sub == "b":
            p.require(p.zero(d1) and p.zero(d4), "d0 = d1 = d4 = 0 is violated")
            p.require((p.zero(rho) and p.zero(mu) and e1 == -1) or not p.zero((mu - nu) * rho),
                      "(rho = mu = 0, eps1 = -1) or (mu - nu)*rho != 0 is violated")
        else:
            p.require(not p.close(d1, d4), "d1 != d4 is violated")
            p.require(not p.zero(d1) or p.zero(d0), "d1 != 0 or d0 = d1 = 0 is violated")
        z = p.num(0)
        return _coords(p, eps, mu - nu, F12, z, F23, (d0, d1, d2, d3, d4, d2, d6), **alg)
    return build


def _sample_nd3(sub):
    def sample(rng):
        while True:
            eps = (_pm(rng), _pm(rng), _pm(rng))
            lam, nu = _r(rng, nonzero=True), _r(rng, nonzero=True)
            mu = _r(rng)
            if sub == "b" and rng.random() < 0.3:
                mu, eps = Fraction(0), (-1, eps[1], eps[2])
            rho = mu * nu / lam
            if eps[0] * lam + eps[2] * rho == 0 or eps[0] * lam * lam + eps[2] * mu * mu >= 0:
                continue
            if sub == "b" and not ((rho == 0 and mu == 0 and eps[0] == -1) or (mu - nu) * rho != 0):
                continue
            out = {"eps": eps, "lam": lam, "mu": mu, "nu": nu, "sF12": _pm(rng)}
            if sub == "a":
                d1 = _r(rng, nonzero=True)
                out.update(d1=d1, d4=d1)
            elif sub == "b":
                out.update(d1=0, d4=0)
            else:
                d1, d4 = _r(rng), _r(rng)
                if d1 == d4:
                    continue
                out.update(d1=d1, d4=d4)
            return out
    return sample


def _build_nd4(sub):
    def build(p: Params) -> dict:
        e1, e2, e3 = eps = p.eps()
        p.require(e3 == -1, "eps3 = -1 is violated")
        mu, rho = p.get("mu"), p.get("rho")
        p.require(not p.zero(mu * rho), "rho*mu != 0 is violated")
        lam, nu = p.fixed("lam", 0), p.fixed("nu", 0)
        alg = _nd_alg(p, eps, lam, mu, nu, rho)
        s = p.sign("s")
        d1, d4 = p.get("d1", 0), p.get("d4", 0)
        d3 = e1 * mu / rho * d1
        d6 = e1 * mu / rho * d4
        d0 = -s * d3
        if sub == "a":
            p.require(p.zero(d0) or not p.zero(d0 * (d1 - d4)), "d0 = 0 or d0*(d1 - d4) != 0 is violated")
        else:
            p.require(p.close(d1, d4) and not p.zero(d1 * d3), "d4 = d1 and d1*d3 != 0 is violated")
        z = p.num(0)
        return _coords(p, eps, mu, s * mu, z, -s * rho, (d0, d1, rho, d3, d4, rho, d6), **alg)
    return build


def _sample_nd4(sub):
    def sample(rng):
        while True:
            eps = (_pm(rng), _pm(rng), -1)
            mu, rho = _r(rng, nonzero=True), _r(rng, nonzero=True)
            out = {"eps": eps, "mu": mu, "rho": rho, "s": _pm(rng)}
            if sub == "a":
                if rng.random() < 0.4:
                    d1, d4 = Fraction(0), _r(rng)
                else:
                    d1, d4 = _r(rng, nonzero=True), _r(rng)
                    if d1 == d4:
                        continue
            else:
                d1 = _r(rng, nonzero=True)
                d4 = d1
            out.update(d1=d1, d4=d4)
            return out
    return sample


def _build_nd5(p: Params) -> dict:
    e1, e2, e3 = eps = p.eps()
    p.require(e3 == -e1, "eps3 = -eps1 is violated")
    mu, nu = p.get("mu"), p.get("nu")
    s = p.sign("s")
    p.require(e1 * (mu * mu - nu * nu) > 0, "eps1*(mu^2 - nu^2) > 0 is violated")
    p.require(not p.zero(mu + 2 * nu) and not p.zero(nu + 2 * mu), "mu + 2 nu != 0 and nu + 2 mu != 0 are violated")
    lam = p.fixed("lam", s * (2 * mu + nu) / 3)
    rho = p.fixed("rho", s * (2 * nu + mu) / 3)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    F12 = p.root("F12", e1 * (mu * mu - nu * nu) / 3)
    d2 = s * e1 * (nu - mu) / 3
    z = p.num(0)
    return _coords(p, eps, (mu - nu) / 3, F12, z, -s * F12, (z, z, d2, z, z, d2, z), **alg)


def _sample_nd5(rng):
    while True:
        e1 = _pm(rng)
        mu, nu = _r(rng), _r(rng)
        if e1 * (mu * mu - nu * nu) > 0 and mu + 2 * nu != 0 and nu + 2 * mu != 0:
            return {"eps": (e1, _pm(rng), -e1), "mu": mu, "nu": nu, "s": _pm(rng), "sF12": _pm(rng)}


def _build_nd6(p: Params) -> dict:
    e2 = p.eps()[1]
    eps = p.eps((1, e2, -1))
    lam = p.get("lam")
    p.require(not p.zero(lam), "lambda != 0 is violated")
    s, t = p.sign("s"), p.sign("t")
    rho = p.fixed("rho", -2 * lam)
    mu = p.fixed("mu", 2 * s * lam)
    nu = p.fixed("nu", 0)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    z = p.num(0)
    return _coords(p, eps, z, t * lam, z, 2 * s * t * lam, (z, z, -lam, z, z, -lam, z), **alg)


def _sample_nd_simple(e1, e3, key):
    def sample(rng):
        return {"eps": (e1, _pm(rng), e3), key: _r(rng, nonzero=True), "s": _pm(rng), "t": _pm(rng)}
    return sample


def _derive_tilde(c: dict) -> dict:
    """lambda~ = d2 + eps1*lambda from scene coordinates."""
    if "lt" in c or not all(k in c for k in ("d2", "lam", "eps")):
        return {}
    return {"lt": c["d2"] + c["eps"][0] * c["lam"]}


def _case7_finish(p, eps, mu, nu, lt, d2):
    e1, _, e3 = eps
    rt = e1 * e3 * mu * nu / lt
    lam = p.fixed("lam", e1 * (lt - d2))
    rho = p.fixed("rho", e3 * (rt - d2))
    p.require(not p.zero(lt + rt - 2 * d2), "eps1*lambda + eps3*rho != 0 is violated")
    return lam, rho, rt


def _build_nd7i(p: Params) -> dict:
    e1, e2, e3 = eps = p.eps()
    mu = p.get("mu")
    nu = p.fixed("nu", mu)
    lt = p.get("lt")
    p.require(not p.zero(mu * lt), "mu*lambda~ != 0 is violated")
    d2 = lt + e1 * e3 * mu * mu / lt
    sq = -(mu / lt) ** 2 * (e3 * lt * lt + e1 * mu * mu)
    p.require(sq > 0, "F12^2 > 0 is violated")
    lam, rho, _ = _case7_finish(p, eps, mu, nu, lt, d2)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    F12 = p.root("F12", sq)
    z = p.num(0)
    return _coords(p, eps, z, F12, z, F12 * e3 * lt / nu, (z, z, d2, z, z, d2, z), **alg)


def _sample_nd7i(rng):
    while True:
        eps = (_pm(rng), _pm(rng), _pm(rng))
        mu, lt = _r(rng, nonzero=True), _r(rng, nonzero=True)
        if eps[2] * lt * lt + eps[0] * mu * mu < 0:
            return {"eps": eps, "mu": mu, "lt": lt, "sF12": _pm(rng)}


def _build_nd7ii(p: Params) -> dict:
    e1, e2, e3 = eps = p.eps()
    p.require(e3 == -e1, "eps3 = -eps1 is violated")
    s = p.sign("s")
    mu, lt = p.get("mu"), p.get("lt")
    p.require(not p.zero(mu * lt), "mu*lambda~ != 0 is violated")
    den = s * lt / 2 - mu
    p.require(not p.zero(den), "lambda~ != 2 eps mu is needed to solve for nu")
    nu = p.fixed("nu", lt * (s * mu / 2 - lt) / den)
    p.require(not p.zero(nu), "nu != 0 is violated")
    p.require(not p.close(lt * lt, nu * nu), "lambda~^2 != nu^2 is violated")
    d2 = s * (nu - mu) / 2
    sq = e1 * (nu - mu) * nu * (s * mu / (2 * lt) - 1)
    p.require(sq > 0, "F12^2 > 0 is violated")
    lam, rho, _ = _case7_finish(p, eps, mu, nu, lt, d2)
    alg = _nd_alg(p, eps, lam, mu, nu, rho)
    F12 = p.root("F12", sq)
    z = p.num(0)
    return _coords(p, eps, z, F12, z, F12 * e3 * lt / nu, (z, z, d2, z, z, d2, z), **alg)


def _sample_nd7ii(rng):
    while True:
        e1 = _pm(rng)
        s = _pm(rng)
        mu, lt = _r(rng, nonzero=True), _r(rng, nonzero=True)
        den = s * lt / 2 - mu
        if den == 0:
            continue
        nu = lt * (s * mu / 2 - lt) / den
        if nu == 0 or lt * lt == nu * nu or mu == nu:
            continue
        if e1 * (nu - mu) * nu * (s * mu / (2 * lt) - 1) <= 0:
            continue
        return {"eps": (e1, _pm(rng), -e1), "s": s, "mu": mu, "lt": lt, "sF12": _pm(rng)}


def _fixed_label(label):
    return lambda c: label


FAMILIES: dict[str, Family] = {}


def _register(*fams: Family) -> None:
    for f in fams:
        FAMILIES[f.id] = f


_register(
    Family("DIAG", "L1", _build_diag, _sample_diag, _labels_diag, ("sF13", "sd2"),
           doc="diagonal L with a1 = a3, h = -a2, only F13 nonzero (up to a basis permutation)"),
    Family("L3_1", "L3", _build_l3_1, _sample_l3(1), _labels_l3(1), ("s",)),
    Family("L3_2", "L3", _build_l3_2, _sample_l3(2), _labels_l3(2), ("sd0",)),
    Family("L3_3", "L3", _build_l3_3, _sample_l3(3), _labels_l3(3), ("sF12",)),
    Family("L3_4", "L3", _build_l3_4, _sample_l3(4), _labels_l3(4), ("sF12",)),
    Family("L5", "L5", _build_l5, _sample_l5, _fixed_label(E11)),
    Family("DEG_1", "deg", _build_deg1, _sample_deg1, _labels_deg(1), ("sF12",)),
    Family("DEG_2", "deg", _build_deg2, _sample_deg2, _labels_deg(2), ("s",)),
    Family("DEG_F0", "deg", _build_deg_f0, _sample_deg_f0, _labels_deg(0)),
    Family("ND_1a", "nondeg", _build_nd1a, _sample_nd1a, _fixed_label(TAU2), ("sF12",)),
    Family("ND_1b", "nondeg", _build_nd1b, _sample_nd_simple(-1, 1, "lam"),
           _fixed_label(LieLabel("tau3", Fraction(1, 2))), ("s", "t")),
    Family("ND_2", "nondeg", _build_nd2, _sample_nd_simple(-1, 1, "mu"),
           _fixed_label(LieLabel("tau3", Fraction(-1, 2))), ("s", "t")),
    Family("ND_3a", "nondeg", _build_nd3("a"), _sample_nd3("a"), _fixed_label(TAU2), ("sF12",)),
    Family("ND_3b", "nondeg", _build_nd3("b"), _sample_nd3("b"), _fixed_label(TAU2), ("sF12",)),
    Family("ND_3c", "nondeg", _build_nd3("c"), _sample_nd3("c"), _fixed_label(TAU2), ("sF12",)),
    Family("ND_4a", "nondeg", _build_nd4("a"), _sample_nd4("a"), _fixed_label(TAU2), ("s",)),
    Family("ND_4b", "nondeg", _build_nd4("b"), _sample_nd4("b"), _fixed_label(TAU2), ("s",)),
    Family("ND_5", "nondeg", _build_nd5, _sample_nd5,
           _fixed_label(LieLabel("tau3", Fraction(-1, 2))), ("s", "sF12")),
    Family("ND_6", "nondeg", _build_nd6, _sample_nd_simple(1, -1, "lam"),
           _fixed_label(LieLabel("tau3", Fraction(1, 2))), ("s", "t")),
    Family("ND_7i", "nondeg", _build_nd7i, _sample_nd7i, _fixed_label(TAU2), ("sF12",), _derive_tilde),
    Family("ND_7ii", "nondeg", _build_nd7ii, _sample_nd7ii,
           _fixed_label(LieLabel("tau3", Fraction(1, 2))), ("s", "sF12"), _derive_tilde),
)

FAMILY_IDS = tuple(FAMILIES)


def get_family(fid: str) -> Family:
    try:
        return FAMILIES[fid]
    except KeyError:
        raise KeyError(f"unknown family {fid!r}; known: {', '.join(FAMILY_IDS)}") from None


# --- scenes -------------------------------------------------------------------

def scene_from_coords(c: dict, exact: bool) -> Scene:
    eps = c["eps"]
    if "L" in c:
        alg = bracket_from_L(c["L"], eps)
    else:
        alg = bracket_nonunimodular(c["nu_params"])
    if not exact:
        alg = alg.to_float()
    twist = TwistingData.three(c["h"], c["F12"], c["F13"], c["F23"], exact=exact)
    delta = DivergenceOperator(asarray([c[f"d{i}"] for i in range(7)], exact))
    return Scene(alg, twist, delta)


def _solve_family(fid: str, values: dict, exact: bool, tol=None) -> tuple[Scene, dict]:
    fam = get_family(fid)
    p = Params(values, exact, tol, fid)
    c = fam.build(p)
    scene = scene_from_coords(c, exact)
    return scene, {**p.out, **{k: v for k, v in c.items() if k not in ("L", "nu_params")}}


def generate_family(fid: str, params: dict, exact: bool = True) -> Scene:
    """Scene of the family from its free parameters (raises FamilyConstraintError)."""
    return _solve_family(fid, params, exact)[0]


def family_coordinates(fid: str, params: dict, exact: bool = True) -> dict:
    return _solve_family(fid, params, exact)[1]


def sample_params(fid: str, rng) -> dict:
    return get_family(fid).sample(rng)


def expected_label(fid: str, params: dict, exact: bool = True):
    """Expected class of the family algebra: a LieLabel, or a set of admissible class names."""
    fam = get_family(fid)
    c = family_coordinates(fid, params, exact)
    return fam.labels(c)


def label_matches(label: LieLabel, expected) -> bool:
    if isinstance(expected, set):
        return label.name in expected
    if expected.param is None:
        return label.name == expected.name and label.param is None
    if label.name != expected.name or label.param is None:
        return False
    return abs(float(label.param) - float(expected.param)) < 1e-9


def permute_scene(scene: Scene, perm) -> Scene:
    """Rewrite a scene in the basis w_a = v_{perm[a]}."""
    p = list(perm)
    n = scene.n
    eps = tuple(scene.alg.epsilon[i] for i in p)
    ix = np.ix_(p, p, p)
    from .frame import build_frame
    frame, _ = build_frame(n, eps)
    alg = MetricLieAlgebra(frame, scene.alg.k[ix].copy())
    twist = TwistingData(scene.twist.H[ix].copy(), scene.twist.F[np.ix_(p, p)].copy())
    d = scene.delta.delta
    order = [0] + [i + 1 for i in p] + [i + 1 + n for i in p]
    return Scene(alg, twist, DivergenceOperator(d[order].copy()))


def scene_coordinates(scene: Scene, kind: str, tol=None) -> dict | None:
    """Coordinates in the chart of a family kind; None when the bracket has the wrong shape."""
    if scene.n != 3:
        return None
    exact = scene.exact
    tol = _tol(exact, tol)
    eps = scene.alg.epsilon
    H, F, d = scene.twist.H, scene.twist.F, scene.delta.delta
    c = {"eps": eps, "h": H[0, 1, 2], "F12": F[0, 1], "F13": F[0, 2], "F23": F[1, 2]}
    c.update({f"d{i}": d[i] for i in range(7)})
    if kind in ("L1", "L3", "L5"):
        if not scene.alg.is_unimodular(tol):
            return None
        tag = canonical_tag(extract_L(scene.alg), eps, tol)
        if tag.kind != kind:
            return None
        if kind == "L1":
            c.update(a1=tag.params[0], a2=tag.params[1], a3=tag.params[2])
        elif kind == "L3":
            c.update(eta=tag.eta, alpha=tag.params[0], beta=tag.params[1])
        else:
            c.update(alpha=tag.params[0])
        return c
    cs = scene.alg.structure_constants()
    e1, _, e3 = eps
    if kind == "deg":
        c.update(lam=e1 * cs[0, 1, 0], mu=e1 * cs[0, 1, 1], nu=-e1 * cs[1, 2, 0], rho=-e1 * cs[1, 2, 1])
    else:
        c.update(lam=e1 * cs[1, 0, 0], mu=e3 * cs[1, 0, 2], nu=e1 * cs[1, 2, 0], rho=e3 * cs[1, 2, 2])
    return c


@dataclass
class Membership:
    member: bool
    family: str
    params: dict = field(default_factory=dict)
    permutation: tuple = (0, 1, 2)
    reason: str = ""

    def __bool__(self):
        return self.member


def _scene_close(a: Scene, b: Scene, tol) -> bool:
    if a.alg.epsilon != b.alg.epsilon:
        return False
    pairs = ((a.alg.k, b.alg.k), (a.twist.H, b.twist.H), (a.twist.F, b.twist.F),
             (a.delta.delta, b.delta.delta))
    for x, y in pairs:
        if is_exact(x) and is_exact(y):
            if max_abs(x - y) > tol:
                return False
        else:
            xf, yf = to_float(x), to_float(y)
            if np.max(np.abs(xf - yf)) > max(float(tol), 1e-12) * max(1.0, float(np.max(np.abs(xf)))):
                return False
    return True


def _permutations_for(kind: str, orientation_preserving_only: bool):
    if kind == "L1":
        perms = list(itertools.permutations(range(3)))
        if orientation_preserving_only:
            from .dorfman import perm_sign
            perms = [q for q in perms if perm_sign(q) > 0]
        return perms
    if kind == "nondeg":
        return [(0, 1, 2), (2, 1, 0)]
    return [(0, 1, 2)]


def membership(scene: Scene, fid: str, tol=None, orientation_preserving_only: bool = False) -> Membership:
    """Does the scene belong to the family (in its stated basis, up to the allowed relabelings)?"""
    fam = get_family(fid)
    exact = scene.exact
    tol = default_tol(exact) if tol is None else tol
    last = "wrong bracket shape"
    for perm in _permutations_for(fam.kind, orientation_preserving_only):
        sc = scene if perm == (0, 1, 2) else permute_scene(scene, perm)
        coords = scene_coordinates(sc, fam.kind, tol)
        if coords is None:
            continue
        if fam.derive:
            coords.update(fam.derive(coords))
        for signs in itertools.product((1, -1), repeat=len(fam.signs)):
            vals = dict(coords, **dict(zip(fam.signs, signs)))
            try:
                built, out = _solve_family(fid, vals, exact, tol)
            except (FamilyConstraintError, ZeroDivisionError) as exc:
                last = str(exc)
                continue
            except ValueError as exc:
                last = str(exc)
                continue
            if _scene_close(built, sc, tol if exact else max(tol, 1e-12)):
                return Membership(True, fid, out, tuple(perm))
            last = "scene differs from the family representative"
    return Membership(False, fid, {}, (0, 1, 2), last)


def find_families(scene: Scene, tol=None, ids=None) -> list[Membership]:
    ids = FAMILY_IDS if ids is None else ids
    return [m for m in (membership(scene, f, tol) for f in ids) if m.member]


def verify_family_sample(fid: str, rng, exact: bool = True):
    """Sample parameters, build the scene and return (params, scene, residual norm)."""
    params = sample_params(fid, rng)
    scene = generate_family(fid, params, exact)
    return params, scene, einstein_residual(scene).norm
