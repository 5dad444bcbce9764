"""Multistart Levenberg-Marquardt search for odd generalized Einstein metrics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .canon import (L1, L2, L3, L5, bracket_from_L, extract_L)
from .connection import DivergenceOperator
from .dorfman import MetricLieAlgebra, TwistingData, algebra_from_brackets, dorfman_coefficients
from .einstein import Scene, einstein_residual, is_einstein, residual_groups
from .frame import build_frame

KINDS = ("l1", "l2", "l3", "l5", "deg", "nondeg")
ALG_VARS = {
    "l1": ("a1", "a2", "a3"),
    "l2": ("alpha", "beta", "gamma"),
    "l3": ("alpha", "beta"),
    "l5": ("alpha",),
    "deg": ("lam", "mu", "nu", "rho"),
    "nondeg": ("lam", "mu", "nu", "rho"),
}
# atlas kinds compatible with each ansatz
ATLAS_KIND = {"l1": "L1", "l2": "L2", "l3": "L3", "l5": "L5", "deg": "deg", "nondeg": "nondeg"}
WALL = 1e-6
POLISH_TOL = 1e-15
MATCH_TOL = 1e-6
SNAP = 1e-3
NEAR = 1e-6
SNAP_ACCEPT = 1e-12


class OutOfDomainError(ValueError):
    """Parameter vector outside the ansatz domain (e.g. on a trace-zero wall)."""


def _f_vars(kind: str) -> tuple[str, ...]:
    if kind == "deg":
        return ("F12", "F23")  # F13 = -F12 (closedness)
    if kind == "nondeg":
        return ("F12", "F23")  # F13 = 0 (closedness)
    return ("F12", "F13", "F23")


def _raw_nonunimodular(kind, eps, lam, mu, nu, rho) -> MetricLieAlgebra:
    e1, _, e3 = eps
    if kind == "deg":
        br = {(1, 2): [e1 * lam, e1 * mu, e1 * mu], (2, 3): [-e1 * nu, -e1 * rho, -e1 * rho],
              (1, 3): [-e1 * lam, -e1 * mu, -e1 * mu]}
    else:
        br = {(1, 3): [0.0, 0.0, 0.0], (1, 2): [-e1 * lam, 0.0, -e3 * mu], (2, 3): [e1 * nu, 0.0, e3 * rho]}
    return algebra_from_brackets(eps, br, exact=False)


@dataclass(frozen=True)
class Ansatz:
    """Variables of a search: algebra parameters, h, the closed F components and delta."""

    kind: str
    epsilon: tuple = (1, 1, 1)
    eta: int = 1
    frozen: tuple = ()  # ((name, value), ...)
    box: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ansatz {self.kind!r}; choose from {', '.join(KINDS)}")
        e = tuple(int(x) for x in self.epsilon)
        if len(e) != 3 or any(x not in (1, -1) for x in e):
            raise ValueError("epsilon must be three signs")
        if self.kind != "l1" and self.kind != "nondeg" and not (e[0] == e[1] == -e[2]):
            raise ValueError(f"ansatz {self.kind} needs eps1 = eps2 = -eps3")
        if self.eta not in (1, -1):
            raise ValueError("eta must be +1 or -1")
        unknown = {k for k, _ in self.frozen} - set(self.all_names)
        if unknown:
            raise ValueError(f"cannot freeze unknown variables {sorted(unknown)}")
        object.__setattr__(self, "epsilon", e)
        if len(self.names) > 24:
            raise ValueError("too many variables")

    @classmethod
    def make(cls, kind: str, epsilon=None, eta: int = 1, frozen: dict | None = None, box: float = 5.0):
        if epsilon is None:
            epsilon = (1, 1, 1) if kind in ("l1", "nondeg") else (1, 1, -1)
        return cls(kind, tuple(epsilon), eta, tuple(sorted((frozen or {}).items())), box)

    @property
    def all_names(self) -> tuple[str, ...]:
        return ALG_VARS[self.kind] + ("h",) + _f_vars(self.kind) + tuple(f"d{i}" for i in range(7))

    @property
    def names(self) -> tuple[str, ...]:
        fz = dict(self.frozen)
        return tuple(nm for nm in self.all_names if nm not in fz)

    def full(self, x: np.ndarray) -> np.ndarray:
        """Free variables (..., m) -> all variables (..., M) with frozen values inserted."""
        x = np.asarray(x, dtype=float)
        fz = dict(self.frozen)
        out = np.empty(x.shape[:-1] + (len(self.all_names),))
        j = 0
        for i, nm in enumerate(self.all_names):
            if nm in fz:
                out[..., i] = float(fz[nm])
            else:
                out[..., i] = x[..., j]
                j += 1
        return out

    def wall(self, y: np.ndarray) -> np.ndarray:
        """Distance-like quantity to the excluded walls, per row of full variables."""
        e1, _, e3 = self.epsilon
        if self.kind == "l2":
            return np.abs(y[..., 1])
        if self.kind == "deg":
            return np.abs(y[..., 0] + y[..., 3])
        if self.kind == "nondeg":
            return np.abs(e1 * y[..., 0] + e3 * y[..., 3])
        return np.full(y.shape[:-1], np.inf)

    def algebra(self, y) -> MetricLieAlgebra:
        e = self.epsilon
        p = [float(v) for v in y[:len(ALG_VARS[self.kind])]]
        if self.kind == "l1":
            return bracket_from_L(L1(*p, exact=False), e)
        if self.kind == "l2":
            return bracket_from_L(L2(*p, exact=False), e)
        if self.kind == "l3":
            return bracket_from_L(L3(self.eta, *p, exact=False), e)
        if self.kind == "l5":
            return bracket_from_L(L5(*p, exact=False), e)
        return _raw_nonunimodular(self.kind, e, *p)

    def twist_and_delta(self, y):
        na = len(ALG_VARS[self.kind])
        h = float(y[na])
        if self.kind == "deg":
            F12, F23 = y[na + 1:na + 3]
            F13 = -F12
        elif self.kind == "nondeg":
            F12, F23 = y[na + 1:na + 3]
            F13 = 0.0
        else:
            F12, F13, F23 = y[na + 1:na + 4]
        d = np.asarray(y[-7:], dtype=float)
        return TwistingData.three(h, float(F12), float(F13), float(F23), exact=False), d

    def scene(self, x) -> Scene:
        """Scene of a free-variable vector (raises OutOfDomainError on a wall)."""
        y = self.full(x)
        if self.wall(y) <= WALL:
            raise OutOfDomainError(f"{self.kind}: parameters lie on an excluded wall")
        alg = self.algebra(y)
        twist, d = self.twist_and_delta(y)
        return Scene(alg, twist, DivergenceOperator(d.copy()))


class _Batched:
    """Vectorized residual: B is linear in (k, H, F), and k is affine in the parameters."""

    def __init__(self, ansatz: Ansatz):
        self.a = ansatz
        self.frame, _ = build_frame(3, ansatz.epsilon)
        M = len(ansatz.all_names)
        base = np.zeros(M)
        na = len(ALG_VARS[ansatz.kind])
        base[0] = 1.0  # keeps probes off the trace-zero walls
        if ansatz.kind == "l2":
            base[1] = 1.0
        cols = []
        B0 = self._B_of(base)
        for i in range(M):
            y = base.copy()
            y[i] += 0.5
            cols.append((self._B_of(y) - B0) / 0.5)
        self.J = np.stack(cols, axis=-1).reshape(-1, M)  # (343, M)
        self.c = B0.reshape(-1) - self.J @ base
        self.na = na

    def _B_of(self, y):
        alg = self.a.algebra(y)
        twist, _ = self.a.twist_and_delta(y)
        return dorfman_coefficients(alg, twist).B

    def _direct(self, y: np.ndarray) -> np.ndarray:
        N = y.shape[0]
        B = (y @ self.J.T + self.c).reshape(N, 7, 7, 7)
        F = np.zeros((N, 3, 3))
        na = self.na
        if self.a.kind in ("deg", "nondeg"):
            F[:, 0, 1] = y[:, na + 1]
            F[:, 1, 2] = y[:, na + 2]
            if self.a.kind == "deg":
                F[:, 0, 2] = -y[:, na + 1]
        else:
            F[:, 0, 1], F[:, 0, 2], F[:, 1, 2] = y[:, na + 1], y[:, na + 2], y[:, na + 3]
        F = F - F.transpose(0, 2, 1)
        d = y[:, -7:]
        G1, G2, G3, G4 = residual_groups(B, F, d, self.frame)
        return np.concatenate([G1.reshape(N, -1), G2, G3, G4.reshape(N, -1)], axis=1)

    def _quadratic_model(self):
        # the residual is exactly quadratic in the variables: r = r0 + L y + y.Q.y
        M = self.J.shape[1]
        eye = np.eye(M)
        r0 = self._direct(np.zeros((1, M)))[0]
        rp = self._direct(eye)
        rm = self._direct(-eye)
        lin = (rp - rm) / 2
        diag = (rp + rm) / 2 - r0
        iu = np.triu_indices(M, 1)
        pairs = self._direct(eye[iu[0]] + eye[iu[1]])
        K = r0.shape[0]
        Q = np.zeros((M, M, K))
        Q[np.arange(M), np.arange(M)] = diag
        off = (pairs - r0 - lin[iu[0]] - lin[iu[1]] - diag[iu[0]] - diag[iu[1]]) / 2
        Q[iu[0], iu[1]] = off
        Q[iu[1], iu[0]] = off
        self.r0, self.lin, self.Q = r0, lin, Q.reshape(M, M * K)
        self.K = K

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Full variables (N, M) -> residual vectors (N, 24)."""
        if not hasattr(self, "Q"):
            self._quadratic_model()
        N, M = y.shape
        yQ = (y @ self.Q).reshape(N, M, self.K)
        return self.r0 + y @ self.lin + np.einsum("nj,njk->nk", y, yQ)


def residual_fn(ansatz: Ansatz, x) -> np.ndarray:
    """Flattened residual (G1, G2, G3, G4) of the scene built from x (length 2n^2 + 2n)."""
    return einstein_residual(ansatz.scene(x)).vector().astype(float)


@dataclass
class Root:
    x: list
    residual: float
    families: list = field(default_factory=list)

    def as_dict(self, names) -> dict:
        return {"params": dict(zip(names, (float(v) for v in self.x))), "residual": self.residual,
                "families": list(self.families)}


@dataclass
class SolveReport:
    ansatz: Ansatz
    starts: int
    seed: int
    tol: float
    roots: list
    converged: int
    rejected_wall: int
    unmatched: list

    @property
    def matched_fraction(self) -> float:
        if not self.roots:
            return 1.0
        return sum(1 for r in self.roots if r.families) / len(self.roots)

    def to_dict(self) -> dict:
        a = self.ansatz
        names = a.names
        return {
            "ansatz": {"kind": a.kind, "epsilon": list(a.epsilon), "eta": a.eta,
                       "frozen": {k: float(v) for k, v in a.frozen}, "box": a.box, "variables": list(names)},
            "starts": self.starts, "seed": self.seed, "tol": self.tol,
            "converged": self.converged, "rejected_wall": self.rejected_wall,
            "distinct_roots": len(self.roots), "matched_fraction": self.matched_fraction,
            "roots": [r.as_dict(names) for r in self.roots],
            "unmatched": [r.as_dict(names) for r in self.unmatched],
        }


def _lm(fun, x0, lo, hi, tol, max_iter=200, mask=None):
    """Batched Levenberg-Marquardt with finite-difference Jacobians.

    ``mask`` (same shape as x0, 0/1) holds the masked-out variables fixed.
    """
    x = x0.copy()
    N, m = x.shape
    r = fun(x)
    cost = np.sum(r * r, axis=1)
    mu = np.full(N, 1e-3)
    nu = np.full(N, 2.0)
    active = np.max(np.abs(r), axis=1) > tol
    eye = np.eye(m)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa, ra = x[idx], r[idx]
        step = 1e-7 * np.maximum(1.0, np.abs(xa))
        # central differences: exact up to rounding for the quadratic residual
        hs = step[:, :, None] * eye[None]
        both = np.concatenate([xa[:, None, :] + hs, xa[:, None, :] - hs], axis=1)
        rp = fun(both.reshape(-1, m)).reshape(idx.size, 2 * m, -1)
        J = ((rp[:, :m] - rp[:, m:]) / (2 * step[:, :, None])).transpose(0, 2, 1)  # (n, rows, m)
        if mask is not None:
            J = J * mask[idx][:, None, :]
        JtJ = np.einsum("nki,nkj->nij", J, J)
        g = np.einsum("nki,nk->ni", J, ra)
        scale = np.maximum(np.einsum("nii->ni", JtJ), 1e-12)
        A = JtJ + mu[idx, None, None] * scale[:, :, None] * eye[None]
        try:
            dx = -np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            dx = -np.stack([np.linalg.lstsq(Ai, gi, rcond=None)[0] for Ai, gi in zip(A, g)])
        xn = np.clip(xa + dx, lo, hi)
        dx = xn - xa
        rn = fun(xn)
        cn = np.sum(rn * rn, axis=1)
        pred = -(2 * np.einsum("ni,ni->n", dx, g) + np.einsum("ni,nij,nj->n", dx, JtJ, dx))
        gain = (cost[idx] - cn) / np.where(np.abs(pred) > 1e-300, pred, 1e-300)
        ok = (cn < cost[idx]) & np.isfinite(cn)
        acc = idx[ok]
        x[acc], r[acc], cost[acc] = xn[ok], rn[ok], cn[ok]
        gk = gain[ok]
        mu[acc] *= np.maximum(1 / 3, 1 - (2 * gk - 1) ** 3)
        nu[acc] = 2.0
        rej = idx[~ok]
        mu[rej] *= nu[rej]
        nu[rej] *= 2
        small = np.max(np.abs(dx), axis=1) < 1e-15 * (1 + np.max(np.abs(xa), axis=1))
        stuck = idx[(~ok & (mu[idx] > 1e12)) | (small & ~ok)]
        active[stuck] = False
        active[idx] &= np.max(np.abs(r[idx]), axis=1) > tol
    return x, r


def _snap(fun, x, lo, hi, max_iter, free=None):
    """Set near-zero coordinates to exactly 0 and re-solve the others.

    Along singular directions of the solution set the iteration only reaches
    ~sqrt(residual) accuracy; the snapped point is kept when it is a root to
    near machine precision.
    """
    small = np.abs(x) < SNAP * np.maximum(1.0, np.max(np.abs(x), axis=1, keepdims=True))
    if free is not None:
        small &= free.astype(bool)
    xs = np.where(small, 0.0, x)
    mask = (~small).astype(float)
    if free is not None:
        mask = mask * free
    xs, rs = _lm(fun, xs, lo, hi, POLISH_TOL, max_iter, mask)
    better = np.max(np.abs(rs), axis=1) <= SNAP_ACCEPT
    return np.where(better[:, None], xs, x)


def _canonical(ansatz: Ansatz, x: np.ndarray) -> np.ndarray:
    """Orbit representative under the F -> -F, delta_0 -> -delta_0 symmetry and,
    for diagonal ansatze, the sign-preserving basis permutations."""
    names = ansatz.names
    cands = [x]
    fl = x.copy()
    for i, nm in enumerate(names):
        if nm.startswith("F") or nm == "d0":
            fl[i] = -fl[i]
    cands.append(fl)
    if ansatz.kind == "l1" and not ansatz.frozen:
        more = []
        for c in cands:
            more.extend(_diag_permutations(ansatz, c))
        cands += more
    return min(cands, key=lambda v: tuple(np.round(v, 7)))


def _diag_permutations(ansatz: Ansatz, x: np.ndarray) -> list[np.ndarray]:
    from .atlas import permute_scene
    out = []
    e = ansatz.epsilon
    sc = ansatz.scene(x)
    for q in itertools.permutations(range(3)):
        if q == (0, 1, 2) or tuple(e[i] for i in q) != e:
            continue
        s2 = permute_scene(sc, q)
        L = extract_L(s2.alg).matrix
        H, F, d = s2.twist.H, s2.twist.F, s2.delta.delta
        out.append(np.array([L[0, 0], L[1, 1], L[2, 2], H[0, 1, 2], F[0, 1], F[0, 2], F[1, 2], *d], float))
    return out


def _family_ids_for(kind: str):
    from .atlas import FAMILIES
    ak = ATLAS_KIND[kind]
    return [fid for fid, f in FAMILIES.items() if f.kind == ak or (ak == "L3" and f.kind == "L3")]


def match_families(ansatz: Ansatz, x, tol: float = MATCH_TOL) -> list[str]:
    """Atlas families containing the scene of x (kind-compatible families only)."""
    from .atlas import membership
    sc = ansatz.scene(x)
    out = []
    for fid in _family_ids_for(ansatz.kind):
        if membership(sc, fid, tol=tol):
            out.append(fid)
    return out


def pinned(ansatz: Ansatz, assignments: list[dict], repeat: int) -> np.ndarray:
    """Pin array for ``solve``: each assignment repeated ``repeat`` times."""
    names = ansatz.names
    rows = []
    for values in assignments:
        unknown = set(values) - set(names)
        if unknown:
            raise ValueError(f"cannot pin unknown variables {sorted(unknown)}")
        row = np.full(len(names), np.nan)
        for k, v in values.items():
            row[names.index(k)] = float(v)
        rows.extend([row] * repeat)
    return np.array(rows).reshape(len(rows), len(names))


def solve(ansatz: Ansatz, starts: int = 200, seed: int = 0, tol: float = 1e-10,
          max_iter: int = 200, match: bool = True, batch: int = 512,
          pin: np.ndarray | None = None) -> SolveReport:
    """Multistart search.

    ``pin`` (starts x free-variable count, NaN = free) fixes variables per
    start, so many frozen algebras can share one batched run.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    rng = np.random.default_rng(seed)
    m = len(ansatz.names)
    lo, hi = -ansatz.box, ansatz.box
    fun_full = _Batched(ansatz)

    homogeneous = ansatz.kind in ("l1", "l2", "deg", "nondeg")
    names = ansatz.names
    norm_idx = [i for i, nm in enumerate(names) if nm.startswith("F")] or list(range(m))

    def fun(x):
        r = fun_full(ansatz.full(x))
        if not homogeneous:
            return r
        # the system is homogeneous of degree 2: fix the scale on the sphere |F| = 1
        extra = np.sum(x[:, norm_idx] ** 2, axis=1, keepdims=True) - 1.0
        return np.concatenate([r, extra], axis=1)

    x0 = rng.uniform(lo, hi, size=(starts, m))
    # sample away from the excluded walls
    for _ in range(100):
        bad = ansatz.wall(ansatz.full(x0)) < 0.05 * ansatz.box
        if not bad.any():
            break
        x0[bad] = rng.uniform(lo, hi, size=(int(bad.sum()), m))
    free = None
    if pin is not None:
        pin = np.asarray(pin, dtype=float)
        if pin.shape != (starts, m):
            raise ValueError(f"pin must have shape {(starts, m)}")
        free = np.isnan(pin).astype(float)
        x0 = np.where(np.isnan(pin), x0, pin)
    xs, rs = [], []
    for s in range(0, starts, batch):
        mk = None if free is None else free[s:s + batch]
        x, r = _lm(fun, x0[s:s + batch], lo, hi, tol, max_iter, mk)
        xs.append(x)
        rs.append(r)
    x = np.concatenate(xs)
    r = np.concatenate(rs)
    near = np.max(np.abs(r), axis=1) <= NEAR
    if near.any():
        # polish: on singular parts of the solution set the parameters converge like sqrt(residual)
        fn = None if free is None else free[near]
        xp, _ = _lm(fun, x[near], lo, hi, POLISH_TOL, max_iter, fn)
        x[near] = _snap(fun, xp, lo, hi, max_iter, fn)
    y = ansatz.full(x)
    norms = np.max(np.abs(fun_full(y)), axis=1)
    conv = norms <= tol
    f_cols = [i for i, nm in enumerate(ansatz.all_names) if nm.startswith("F")]
    wall_ok = (ansatz.wall(y) > WALL) & (np.max(np.abs(y[:, f_cols]), axis=1) > WALL)
    good = np.nonzero(conv & wall_ok)[0]
    rejected = int(np.sum(conv & ~wall_ok))
    keep = []
    for i in good:
        sc = ansatz.scene(x[i])
        if is_einstein(sc, tol=tol):
            keep.append(i)
    reps = np.array([_canonical(ansatz, x[i]) for i in keep]).reshape(len(keep), m)
    order = np.lexsort(np.round(reps, 7).T[::-1]) if len(keep) else np.array([], int)
    uniq: list[Root] = []
    for j in order:
        v = reps[j]
        if any(np.max(np.abs(v - np.array(u.x))) < 1e-6 for u in uniq):
            continue
        uniq.append(Root(v.tolist(), float(norms[keep[j]])))
    if match:
        for root in uniq:
            root.families = match_families(ansatz, np.array(root.x))
    unmatched = [u for u in uniq if match and not u.families]
    return SolveReport(ansatz, starts, seed, tol, uniq, int(conv.sum()), rejected, unmatched)
