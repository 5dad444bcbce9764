"""Three-dimensional metric Lie algebras: the operator L, canonical brackets,
non-unimodular normal forms, the Chevalley-Eilenberg differential and gauge reduction."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dorfman import MetricLieAlgebra, TwistingData, perm_sign
from .frame import build_frame
from .numeric import Surd, asarray, const, default_tol, einsum, is_exact, max_abs, sign, to_exact, zeros

CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def inv_sqrt2(exact: bool):
    return Surd(0, Fraction(1, 2), 2) if exact else 1 / math.sqrt(2)


@dataclass(frozen=True)
class CanonicalTag:
    kind: str  # "L1", "L2", "L3", "L5" or "general"
    params: tuple = ()
    eta: int | None = None

    def __str__(self):
        if self.kind == "general":
            return "general"
        body = ",".join(str(p) for p in self.params)
        if self.kind == "L3":
            return f"L3{'+' if self.eta > 0 else '-'}({body})"
        return f"{self.kind}({body})"


@dataclass(frozen=True)
class OperatorL:
    """Matrix of L in the basis (v_a), with L(v_a) = sum_b matrix[b, a] v_b."""

    matrix: np.ndarray
    tag: CanonicalTag = CanonicalTag("general")

    @property
    def exact(self) -> bool:
        return is_exact(self.matrix)

    def is_g_symmetric(self, epsilon, tol=None) -> bool:
        tol = default_tol(self.exact) if tol is None else tol
        e = np.array(epsilon)
        e = e.astype(object) if self.exact else e.astype(float)
        S = e[None, :] * self.matrix  # eps_a L_ba at [b, a]
        return max_abs(S - S.T) <= tol


def _matrix(rows, exact: bool) -> np.ndarray:
    return np.array([[v if exact else float(v) for v in r] for r in rows],
                    dtype=object if exact else float)


def _num(v, exact: bool):
    return to_exact(v) if exact else float(v)


def L1(alpha, beta, gamma, exact: bool = True) -> OperatorL:
    a, b, c = (_num(v, exact) for v in (alpha, beta, gamma))
    z = const(0, exact)
    return OperatorL(_matrix([[a, z, z], [z, b, z], [z, z, c]], exact), CanonicalTag("L1", (a, b, c)))


def L2(alpha, beta, gamma, exact: bool = True) -> OperatorL:
    a, b, c = (_num(v, exact) for v in (alpha, beta, gamma))
    if b == 0:
        raise ValueError("L2 requires beta != 0")
    z = const(0, exact)
    return OperatorL(_matrix([[c, z, z], [z, a, -b], [z, b, a]], exact), CanonicalTag("L2", (a, b, c)))


def L3(eta: int, alpha, beta, exact: bool = True) -> OperatorL:
    if eta not in (1, -1):
        raise ValueError("eta must be +1 or -1")
    a, b = _num(alpha, exact), _num(beta, exact)
    h = const(Fraction(eta, 2), exact)
    z = const(0, exact)
    return OperatorL(_matrix([[b, z, z], [z, h + a, h], [z, -h, -h + a]], exact),
                     CanonicalTag("L3", (a, b), eta))


def L5(alpha, exact: bool = True) -> OperatorL:
    a = _num(alpha, exact)
    r = inv_sqrt2(exact)
    z = const(0, exact)
    return OperatorL(_matrix([[a, r, z], [r, a, r], [z, -r, a]], exact), CanonicalTag("L5", (a,)))


def unified_L(alpha, beta, gamma, lam, mu, epsilon, exact: bool = True) -> OperatorL:
    a, b, c, l, m = (_num(v, exact) for v in (alpha, beta, gamma, lam, mu))
    z = const(0, exact)
    e23 = epsilon[1] * epsilon[2]
    M = _matrix([[a, l, z], [l, b, m], [z, e23 * m, c]], exact)
    return OperatorL(M, canonical_tag(M, epsilon))


def _check_L_signs(L: OperatorL, epsilon) -> None:
    kind = L.tag.kind
    if kind in ("L2", "L3", "L5"):
        e1, e2, e3 = epsilon
        if not (e1 == e2 and e3 == -e2):
            raise ValueError(f"{kind} needs eps1 = eps2 = -eps3, got {tuple(epsilon)}")


def bracket_from_L(L: OperatorL | np.ndarray, epsilon, orientation: int = 1) -> MetricLieAlgebra:
    """[v_a, v_b] = orientation * eps_c L(v_c) for (a, b, c) cyclic."""
    if not isinstance(L, OperatorL):
        L = OperatorL(np.asarray(L))
    _check_L_signs(L, epsilon)
    frame, _ = build_frame(3, epsilon)
    exact = L.exact
    M = L.matrix
    eps = frame.epsilon
    k = zeros((3, 3, 3), exact)
    for a, b, c in CYCLIC:
        for d in range(3):
            v = orientation * eps[c] * M[d, c] * eps[d]
            k[a, b, d] = v
            k[b, a, d] = -v
    return MetricLieAlgebra(frame, k)


def extract_L(alg: MetricLieAlgebra, orientation: int = 1) -> OperatorL:
    """Invert bracket_from_L; the result is g-symmetric iff alg is unimodular."""
    if alg.n != 3:
        raise ValueError("the operator L is defined for n = 3")
    eps = alg.epsilon
    exact = alg.exact
    M = zeros((3, 3), exact)
    for a, b, c in CYCLIC:
        for d in range(3):
            M[d, c] = orientation * alg.k[a, b, d] * eps[c] * eps[d]
    return OperatorL(M, canonical_tag(M, eps))


def canonical_tag(L, epsilon, tol=None) -> CanonicalTag:
    """Detect L1 / L2 / L3 / L5 shapes; no normal-form reduction is attempted."""
    M = L.matrix if isinstance(L, OperatorL) else np.asarray(L)
    exact = is_exact(M)
    tol = (Fraction(0) if exact else 1e-9) if tol is None else tol

    def z(x):
        return abs(x) <= tol

    def eq(x, y):
        return abs(x - y) <= tol

    if all(z(M[i, j]) for i in range(3) for j in range(3) if i != j):
        return CanonicalTag("L1", (M[0, 0], M[1, 1], M[2, 2]))
    e1, e2, e3 = epsilon
    if not (e1 == e2 and e3 == -e2):
        return CanonicalTag("general")
    if all(z(M[i, j]) for i, j in ((0, 1), (1, 0), (0, 2), (2, 0))):
        if eq(M[1, 1], M[2, 2]) and eq(M[1, 2], -M[2, 1]) and not z(M[2, 1]):
            return CanonicalTag("L2", (M[1, 1], M[2, 1], M[0, 0]))
        for eta in (1, -1):
            h = const(Fraction(eta, 2), exact)
            if eq(M[1, 2], h) and eq(M[2, 1], -h) and eq(M[1, 1] - M[2, 2], 2 * h):
                return CanonicalTag("L3", (M[1, 1] - h, M[0, 0]), eta)
        return CanonicalTag("general")
    r = inv_sqrt2(exact)
    if (z(M[0, 2]) and z(M[2, 0]) and eq(M[0, 1], r) and eq(M[1, 0], r) and eq(M[1, 2], r)
            and eq(M[2, 1], -r) and eq(M[0, 0], M[1, 1]) and eq(M[1, 1], M[2, 2])):
        return CanonicalTag("L5", (M[0, 0],))
    return CanonicalTag("general")


@dataclass(frozen=True)
class NonUnimodularParams:
    """Parameters of the two non-unimodular normal forms.

    kind "degenerate": eps = (e1, e1, -e1) and lambda + rho != 0.
    kind "nondegenerate": v1, v3 span the unimodular kernel and eps1*lambda + eps3*rho != 0.
    """

    kind: str
    lam: object
    mu: object
    nu: object
    rho: object
    epsilon: tuple

    def __post_init__(self):
        if self.kind not in ("degenerate", "nondegenerate"):
            raise ValueError("kind must be 'degenerate' or 'nondegenerate'")
        e1, e2, e3 = self.epsilon
        if self.kind == "degenerate":
            if not (e1 == e2 == -e3):
                raise ValueError("degenerate normal form needs eps1 = eps2 = -eps3")
            if self.lam + self.rho == 0:
                raise ValueError("degenerate normal form needs lambda + rho != 0 (trace of A vanishes)")
        elif e1 * self.lam + e3 * self.rho == 0:
            raise ValueError("nondegenerate normal form needs eps1*lambda + eps3*rho != 0 (trace of A vanishes)")

    def A(self) -> np.ndarray:
        """Matrix of ad_{v_2} restricted to the unimodular kernel."""
        l, m, n_, r = self.lam, self.mu, self.nu, self.rho
        e1, _, e3 = self.epsilon
        exact = not isinstance(l, float)
        if self.kind == "degenerate":
            half = const("1/2", exact)
            rows = [[-e1 * l, -e1 * n_ * half], [-e1 * 2 * m, -e1 * r]]
        else:
            rows = [[e1 * l, e1 * n_], [e3 * m, e3 * r]]
        return np.array(rows, dtype=object if exact else float)


def nonunimodular_params(kind, lam, mu, nu, rho, epsilon, exact: bool = True) -> NonUnimodularParams:
    vals = tuple(_num(v, exact) for v in (lam, mu, nu, rho))
    return NonUnimodularParams(kind, *vals, tuple(int(e) for e in epsilon))


def bracket_nonunimodular(p: NonUnimodularParams) -> MetricLieAlgebra:
    l, m, n_, r = p.lam, p.mu, p.nu, p.rho
    e1, _, e3 = p.epsilon
    exact = not isinstance(l, float)
    z = const(0, exact)
    from .dorfman import algebra_from_brackets
    if p.kind == "degenerate":
        br = {(1, 2): [e1 * l, e1 * m, e1 * m],
              (2, 3): [-e1 * n_, -e1 * r, -e1 * r],
              (1, 3): [-e1 * l, -e1 * m, -e1 * m]}
    else:
        br = {(1, 3): [z, z, z],
              (1, 2): [-e1 * l, z, -e3 * m],
              (2, 3): [e1 * n_, z, e3 * r]}
    return algebra_from_brackets(p.epsilon, br, exact)


# --- exterior algebra on left-invariant forms --------------------------------

def ce_differential(form: np.ndarray, alg: MetricLieAlgebra) -> np.ndarray:
    """d of a left-invariant k-form given as a totally antisymmetric rank-k array.

    (d alpha)(x_0..x_k) = sum_{i<j} (-1)^{i+j} alpha([x_i, x_j], x_0..^i..^j..x_k),
    evaluated on increasing index tuples and extended by antisymmetry.
    """
    form = np.asarray(form)
    k = form.ndim
    if k < 1 or k > 3:
        raise ValueError("forms of degree 1, 2 or 3 are supported")
    n = alg.n
    c = alg.structure_constants()
    out = zeros((n,) * (k + 1), is_exact(form) or alg.exact)
    pairs = list(itertools.combinations(range(k + 1), 2))
    perms = [(p, perm_sign(p)) for p in itertools.permutations(range(k + 1))]
    for idx in itertools.combinations(range(n), k + 1):
        total = 0
        for i, j in pairs:
            rest = tuple(idx[m] for m in range(k + 1) if m not in (i, j))
            sgn = -1 if (i + j) % 2 else 1
            for d in range(n):
                coef = c[idx[i], idx[j], d]
                if coef:
                    f = form[(d,) + rest]
                    if f:
                        total = total + sgn * coef * f
        if total:
            for p, ps in perms:
                out[tuple(idx[q] for q in p)] = total if ps > 0 else -total
    return out


def wedge(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """alpha ^ beta = (1/(p! q!)) sum_sigma sgn(sigma) (alpha (x) beta) o sigma."""
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    p, q = alpha.ndim, beta.ndim
    exact = is_exact(alpha) or is_exact(beta)
    prod = np.multiply.outer(alpha, beta)
    out = None
    for perm in itertools.permutations(range(p + q)):
        term = prod.transpose(perm) * perm_sign(perm)
        out = term if out is None else out + term
    return out * const(Fraction(1, math.factorial(p) * math.factorial(q)), exact)


def gauge_reduce(g, b: np.ndarray, A: np.ndarray, H: np.ndarray, F: np.ndarray,
                 alg: MetricLieAlgebra) -> tuple[np.ndarray, np.ndarray]:
    """(H - db - (2F + dA)^A, F + dA).

    ``g`` is the metric of the generalized metric being normalized; the new
    twisting data depend only on b and A.
    """
    dA = ce_differential(A, alg)
    Ht = H - ce_differential(b, alg) - wedge(2 * F + dA, A)
    return Ht, F + dA


def constraint_form(H: np.ndarray, F: np.ndarray, alg: MetricLieAlgebra) -> np.ndarray:
    """dH + F^F."""
    if alg.n < 4:
        n = alg.n
        return zeros((n,) * 4, is_exact(F))
    return ce_differential(H, alg) + wedge(F, F)


# --- random data for tests and sweeps ----------------------------------------

def random_form(rng, n: int, degree: int, exact: bool = False, scale: float = 2.0) -> np.ndarray:
    """Random antisymmetric array; exact draws use small integers over 4."""
    out = zeros((n,) * degree, exact)
    for idx in itertools.combinations(range(n), degree):
        v = Fraction(int(rng.integers(-8, 9)), 4) if exact else float(rng.uniform(-scale, scale))
        for perm in itertools.permutations(range(degree)):
            out[tuple(idx[p] for p in perm)] = v * perm_sign(perm)
    return out


def random_algebra(rng, exact: bool = False, kind: str | None = None) -> MetricLieAlgebra:
    """Random 3-dim metric Lie algebra from one of the canonical builders."""
    kinds = ("L1", "L2", "L3", "L5", "unified", "degenerate", "nondegenerate")
    kind = kinds[int(rng.integers(len(kinds)))] if kind is None else kind

    def r():
        return Fraction(int(rng.integers(-8, 9)), 4) if exact else float(rng.uniform(-2, 2))

    def sgn():
        return int(rng.choice([1, -1]))

    if kind == "L1":
        return bracket_from_L(L1(r(), r(), r(), exact), (sgn(), sgn(), sgn()))
    e1 = sgn()
    eps = (e1, e1, -e1)
    if kind == "L2":
        b = r()
        while b == 0:
            b = r()
        return bracket_from_L(L2(r(), b, r(), exact), eps)
    if kind == "L3":
        return bracket_from_L(L3(sgn(), r(), r(), exact), eps)
    if kind == "L5":
        return bracket_from_L(L5(r(), exact), eps)
    if kind == "unified":
        return bracket_from_L(unified_L(r(), r(), r(), r(), r(), eps, exact), eps)
    while True:
        l, m, n_, rr = r(), r(), r(), r()
        if kind == "degenerate":
            if l + rr != 0:
                return bracket_nonunimodular(NonUnimodularParams("degenerate", l, m, n_, rr, eps))
        else:
            ee = (sgn(), sgn(), sgn())
            if ee[0] * l + ee[2] * rr != 0:
                return bracket_nonunimodular(NonUnimodularParams("nondegenerate", l, m, n_, rr, ee))


def closed_two_form(rng, alg: MetricLieAlgebra, exact: bool = False) -> np.ndarray:
    """Random element of ker d on 2-forms, as a random combination of a kernel basis."""
    n = alg.n
    F = random_form(rng, n, 2, exact)
    if max_abs(ce_differential(F, alg)) <= default_tol(exact):
        return F
    pairs = list(itertools.combinations(range(n), 2))
    cols = []
    for a, b in pairs:
        e = zeros((n, n), exact)
        e[a, b] = const(1, exact)
        e[b, a] = const(-1, exact)
        cols.append(ce_differential(e, alg).reshape(-1))
    D = np.array(cols, dtype=object if exact else float).T
    x = np.array([F[a, b] for a, b in pairs], dtype=object if exact else float)
    basis = nullspace(D)
    if not basis:
        return zeros((n, n), exact)
    y = sum((x[i] * v for i, v in enumerate(basis)), start=zeros(len(pairs), exact))
    out = zeros((n, n), exact)
    for (a, b), v in zip(pairs, y):
        out[a, b] = v
        out[b, a] = -v
    return out


def nullspace(M: np.ndarray, tol=None) -> list[np.ndarray]:
    """Kernel basis by Gauss-Jordan elimination; exact on object arrays."""
    exact = is_exact(M)
    tol = default_tol(exact) if tol is None else tol
    if not exact:
        _, s, vt = np.linalg.svd(M.astype(float))
        rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 1.0)))
        return [vt[i] for i in range(rank, M.shape[1])]
    R, pivots = rref(M)
    free = [j for j in range(M.shape[1]) if j not in pivots]
    out = []
    for f in free:
        v = zeros(M.shape[1], True)
        v[f] = Fraction(1)
        for row, pc in enumerate(pivots):
            v[pc] = -R[row, f]
        out.append(v)
    return out


def rref(M: np.ndarray):
    """Reduced row echelon form of an exact matrix and its pivot columns."""
    R = M.astype(object).copy()
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        p = next((i for i in range(r, rows) if R[i, c] != 0), None)
        if p is None:
            continue
        R[[r, p]] = R[[p, r]]
        R[r] = R[r] / R[r, c]
        for i in range(rows):
            if i != r and R[i, c] != 0:
                R[i] = R[i] - R[i, c] * R[r]
        pivots.append(c)
        r += 1
    return R, pivots


def rank(M: np.ndarray) -> int:
    if is_exact(M):
        return len(rref(M)[1])
    return int(np.linalg.matrix_rank(M.astype(float), tol=1e-9))


def killing_form(alg: MetricLieAlgebra) -> np.ndarray:
    """K(v_a, v_b) = tr(ad_a ad_b) in the basis (v_a)."""
    c = alg.structure_constants()
    # (ad_a)_{d e} = c[a, e, d]
    return einsum("aed,bde->ab", c, c)


def derived_algebra_basis(alg: MetricLieAlgebra) -> np.ndarray:
    """Rows spanning [g, g]."""
    c = alg.structure_constants()
    n = alg.n
    rows = [c[a, b] for a, b in itertools.combinations(range(n), 2)]
    M = np.array(rows, dtype=c.dtype)
    if is_exact(M):
        R, piv = rref(M)
        return R[:len(piv)]
    _, s, vt = np.linalg.svd(M)
    rk = int(np.sum(s > 1e-9 * max(1.0, s[0] if s.size else 1.0)))
    return vt[:rk]


def signature(Q: np.ndarray, tol=None) -> tuple[int, int, int]:
    """(positive, negative, zero) counts of a symmetric form; exact by congruence."""
    exact = is_exact(Q)
    if not exact:
        w = np.linalg.eigvalsh(Q.astype(float))
        t = 1e-9 * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0) if tol is None else tol
        return int(np.sum(w > t)), int(np.sum(w < -t)), int(np.sum(np.abs(w) <= t))
    A = Q.astype(object).copy()
    n = A.shape[0]
    pos = neg = 0
    idx = list(range(n))
    while idx:
        piv = next((i for i in idx if A[i, i] != 0), None)
        if piv is None:
            pair = next(((i, j) for i in idx for j in idx if i < j and A[i, j] != 0), None)
            if pair is None:
                break
            i, j = pair
            # replace e_i by e_i + e_j to create a nonzero diagonal entry
            A[i, :] = A[i, :] + A[j, :]
            A[:, i] = A[:, i] + A[:, j]
            piv = i
        d = A[piv, piv]
        if sign(d) > 0:
            pos += 1
        else:
            neg += 1
        rest = [i for i in idx if i != piv]
        for i in rest:
            f = A[i, piv] / d
            if f != 0:
                A[i, :] = A[i, :] - f * A[piv, :]
                A[:, i] = A[:, i] - f * A[:, piv]
        idx = rest
    return pos, neg, n - pos - neg


def as_backend(x, exact: bool):
    return asarray(x, exact)
