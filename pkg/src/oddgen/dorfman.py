"""Dorfman coefficients B_ABC of the twisted bracket on g + g* + R."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .frame import FrameSignature, build_frame, raise_index
from .numeric import const, default_tol, einsum, is_exact, max_abs, scale_signs, zeros

_PERMS = (
    ((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
    ((1, 0, 2), -1), ((0, 2, 1), -1), ((2, 1, 0), -1),
)


def perm_sign(p) -> int:
    p = list(p)
    s = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def _antisymmetric(T: np.ndarray, tol) -> bool:
    k = T.ndim
    for i in range(k - 1):
        axes = list(range(k))
        axes[i], axes[i + 1] = axes[i + 1], axes[i]
        S = T.transpose(axes)
        if T.dtype == object and not tol:
            if any(x != -y for x, y in zip(T.flat, S.flat) if x or y):
                return False
        elif max_abs(T + S) > tol:
            return False
    return True


@dataclass(frozen=True)
class MetricLieAlgebra:
    """Structure coefficients k_abc = g([v_a, v_b], v_c) in a g-orthonormal basis.

    ``k`` is indexed from 0, so ``k[a-1, b-1, c-1]`` holds k_abc.
    """

    frame: FrameSignature
    k: np.ndarray

    def __post_init__(self):
        n = self.frame.n
        if self.k.shape != (n, n, n):
            raise ValueError(f"k must have shape {(n, n, n)}, got {self.k.shape}")
        if max_abs(self.k + self.k.transpose(1, 0, 2)) > default_tol(self.exact):
            raise ValueError("k_abc must be antisymmetric in a, b")
        self.k.flags.writeable = False

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def exact(self) -> bool:
        return is_exact(self.k)

    @property
    def epsilon(self) -> tuple[int, ...]:
        return self.frame.epsilon

    def coeff(self, a: int, b: int, c: int):
        return self.k[a - 1, b - 1, c - 1]

    def structure_constants(self) -> np.ndarray:
        """c[a, b, d] with [v_a, v_b] = sum_d c[a, b, d] v_d."""
        return scale_signs(self.k, self.epsilon)

    def bracket(self, x, y):
        c = self.structure_constants()
        return einsum("a,b,abd->d", np.asarray(x), np.asarray(y), c)

    def jacobi_tensor(self) -> np.ndarray:
        """J_abcd = sum over cyclic (a,b,c) of sum_e eps_e k_abe k_ecd."""
        ke = scale_signs(self.k, self.epsilon)
        t = einsum("abe,ecd->abcd", ke, self.k)
        return t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)

    def jacobi_defect(self):
        return max_abs(self.jacobi_tensor())

    def satisfies_jacobi(self, tol=None) -> bool:
        return self.jacobi_defect() <= (default_tol(self.exact) if tol is None else tol)

    def trace_form(self) -> np.ndarray:
        """tr ad_{v_a} for each basis vector."""
        c = self.structure_constants()
        return einsum("abb->a", c)

    def is_unimodular(self, tol=None) -> bool:
        return max_abs(self.trace_form()) <= (default_tol(self.exact) if tol is None else tol)

    def to_float(self) -> "MetricLieAlgebra":
        from .numeric import to_float
        return MetricLieAlgebra(self.frame, to_float(self.k))


def algebra_from_brackets(epsilon, brackets: dict, exact: bool = True) -> MetricLieAlgebra:
    """Build k from {(a, b): [coef of v_1, ..., coef of v_n]} with 1-based a < b."""
    frame, _ = build_frame(len(epsilon), epsilon)
    n = frame.n
    k = zeros((n, n, n), exact)
    for (a, b), coefs in brackets.items():
        for c in range(n):
            val = (_exact(coefs[c]) if exact else float(coefs[c])) * frame.epsilon[c]
            k[a - 1, b - 1, c] = val
            k[b - 1, a - 1, c] = -val
    return MetricLieAlgebra(frame, k)


@dataclass(frozen=True)
class TwistingData:
    """Frame components H_abc and F_ab (0-indexed arrays)."""

    H: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        n = self.F.shape[0]
        if self.F.shape != (n, n) or self.H.shape != (n, n, n):
            raise ValueError("H must be n x n x n and F n x n")
        tol = default_tol(is_exact(self.F))
        if not _antisymmetric(self.H, tol):
            raise ValueError("H must be totally antisymmetric")
        if not _antisymmetric(self.F, tol):
            raise ValueError("F must be antisymmetric")
        self.H.flags.writeable = False
        self.F.flags.writeable = False

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @classmethod
    def from_entries(cls, n: int, H_entries=(), F_entries=(), exact: bool = True) -> "TwistingData":
        """Entries as ((a, b, c), value) / ((a, b), value) with 1-based indices."""
        H = zeros((n, n, n), exact)
        F = zeros((n, n), exact)
        for idx, v in H_entries:
            idx = tuple(i - 1 for i in idx)
            if len(set(idx)) < 3:
                continue
            v = v if not exact else _exact(v)
            for p, s in _PERMS:
                H[tuple(idx[q] for q in p)] = s * v
        for (a, b), v in F_entries:
            v = v if not exact else _exact(v)
            F[a - 1, b - 1] = v
            F[b - 1, a - 1] = -v
        return cls(H, F)

    @classmethod
    def three(cls, h=0, F12=0, F13=0, F23=0, exact: bool = True) -> "TwistingData":
        return cls.from_entries(3, [((1, 2, 3), h)], [((1, 2), F12), ((1, 3), F13), ((2, 3), F23)], exact)

    def h(self):
        return self.H[0, 1, 2]


def _exact(v):
    from .numeric import to_exact
    return to_exact(v)


@dataclass(frozen=True)
class DorfmanTensor:
    """Fully skew B_ABC indexed by A, B, C in 0..2n."""

    B: np.ndarray
    frame: FrameSignature

    def __post_init__(self):
        d = self.frame.dim
        if self.B.shape != (d, d, d):
            raise ValueError(f"B must have shape {(d, d, d)}")
        self.B.flags.writeable = False

    @property
    def exact(self) -> bool:
        return is_exact(self.B)

    def raised(self) -> np.ndarray:
        _, eta = build_frame(self.frame.n, self.frame.epsilon)
        return raise_index(self.B, eta)

    def __getitem__(self, idx):
        return self.B[idx]


def dorfman_coefficients(alg: MetricLieAlgebra, twist: TwistingData) -> DorfmanTensor:
    """Fill the independent blocks in closed form, then extend by skewness."""
    frame = alg.frame
    n = frame.n
    if twist.n != n:
        raise ValueError(f"twisting data has dimension {twist.n}, algebra has {n}")
    exact = alg.exact
    if is_exact(twist.F) != exact:
        raise ValueError("algebra and twisting data use different backends")
    k, H, F = alg.k, twist.H, twist.F
    half = const("1/2", exact)
    B = zeros((frame.dim,) * 3, exact)

    def put(A, Bi, C, val):
        idx = (A, Bi, C)
        for p, s in _PERMS:
            B[tuple(idx[q] for q in p)] = val if s > 0 else -val

    r = range(n)
    for a, b, c in itertools.combinations(r, 3):
        put(a + 1, b + 1, c + 1, half * (k[a, b, c] + k[b, c, a] + k[c, a, b] - H[a, b, c]))
        put(a + 1 + n, b + 1 + n, c + 1 + n,
            -half * (k[a, b, c] + k[b, c, a] + k[c, a, b] + H[a, b, c]))
    for a in r:
        for j, kk in itertools.combinations(r, 2):
            # B_{a, j+n, k+n}
            put(a + 1, j + 1 + n, kk + 1 + n,
                half * (k[a, kk, j] + k[j, kk, a] - k[a, j, kk] - H[a, j, kk]))
            # B_{i, b, c} with i' = a
            i, b2, c2 = a, j, kk
            put(i + 1 + n, b2 + 1, c2 + 1,
                half * (k[c2, i, b2] + k[c2, b2, i] + k[i, b2, c2] - H[i, b2, c2]))
    for b, c in itertools.combinations(r, 2):
        put(0, b + 1, c + 1, F[b, c])
        put(0, b + 1 + n, c + 1 + n, F[b, c])
    for i in r:
        for b in r:
            if i != b:
                put(i + 1 + n, b + 1, 0, F[i, b])
    return DorfmanTensor(B, frame)


def check_skew(B, tol=None):
    """(True, None) if B is fully antisymmetric, else (False, (triple, partner))."""
    T = B.B if isinstance(B, DorfmanTensor) else np.asarray(B)
    if tol is None:
        tol = default_tol(is_exact(T))
    bad1 = np.abs(T + T.transpose(1, 0, 2)) > tol
    bad2 = np.abs(T + T.transpose(0, 2, 1)) > tol
    bad = np.asarray(bad1 | bad2, dtype=bool)
    if not bad.any():
        return True, None
    A, Bi, C = (int(v) for v in np.argwhere(bad)[0])
    partner = (Bi, A, C) if bad1[A, Bi, C] else (A, C, Bi)
    return False, ((A, Bi, C), partner)
