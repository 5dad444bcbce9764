"""Scalar backends: exact rationals extended by one quadratic surd, and float64.

Arrays of the exact backend are numpy object arrays holding ``Fraction`` or
``Surd`` values; arrays of the float backend are plain float64 arrays.  All
tensor code is written against numpy so the same functions serve both.
"""
from __future__ import annotations

import itertools

import math
from fractions import Fraction
from numbers import Rational

import numpy as np

RATIONAL = "rational"
FLOAT = "float"
BACKENDS = (RATIONAL, FLOAT)

FLOAT_TOL = 1e-10


def _squarefree_split(n: int) -> tuple[int, int]:
    """Write a positive integer as s**2 * m with m free of small square factors."""
    s, m = 1, n
    r = math.isqrt(m)
    if r * r == m:
        return r, 1
    p = 2
    while p * p <= m and p < 100_000:
        while m % (p * p) == 0:
            m //= p * p
            s *= p
        p += 1 if p == 2 else 2
    r = math.isqrt(m)
    if r * r == m:
        return s * r, 1
    return s, m


class Surd:
    """Number a + b*sqrt(m), a and b rational, m > 1 squarefree.

    Arithmetic closes within one field; combining two different m raises
    ``ValueError``.  Results with b == 0 collapse to ``Fraction``.
    """

    __slots__ = ("a", "b", "m")

    def __init__(self, a, b=0, m: int = 2):
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.m = int(m)

    @classmethod
    def make(cls, a, b, m):
        if b == 0:
            return Fraction(a)
        return cls(a, b, m)

    @classmethod
    def sqrt_of(cls, m: int, coef=1):
        """coef * sqrt(m) for a positive integer m, normalized."""
        if m < 0:
            raise ValueError("square root of a negative number")
        if m == 0:
            return Fraction(0)
        s, mm = _squarefree_split(int(m))
        if mm == 1:
            return Fraction(coef) * s
        return cls(0, Fraction(coef) * s, mm)

    def _parts(self, other):
        if isinstance(other, Surd):
            if other.m != self.m:
                raise ValueError(f"mixed quadratic fields sqrt({self.m}) and sqrt({other.m})")
            return other.a, other.b
        if isinstance(other, (int, Fraction, Rational)):
            return Fraction(other), Fraction(0)
        return None

    def __add__(self, other):
        p = self._parts(other)
        if p is None:
            return NotImplemented
        return Surd.make(self.a + p[0], self.b + p[1], self.m)

    __radd__ = __add__

    def __sub__(self, other):
        p = self._parts(other)
        if p is None:
            return NotImplemented
        return Surd.make(self.a - p[0], self.b - p[1], self.m)

    def __rsub__(self, other):
        p = self._parts(other)
        if p is None:
            return NotImplemented
        return Surd.make(p[0] - self.a, p[1] - self.b, self.m)

    def __mul__(self, other):
        if not isinstance(other, Surd) and isinstance(other, (int, Fraction)) and not other:
            return Fraction(0)
        p = self._parts(other)
        if p is None:
            return NotImplemented
        c, d = p
        return Surd.make(self.a * c + self.b * d * self.m, self.a * d + self.b * c, self.m)

    __rmul__ = __mul__

    def _inverse(self):
        norm = self.a * self.a - self.m * self.b * self.b
        if norm == 0:
            raise ZeroDivisionError("division by zero")
        return Surd.make(self.a / norm, -self.b / norm, self.m)

    def __truediv__(self, other):
        if isinstance(other, Surd):
            return self * other._inverse()
        p = self._parts(other)
        if p is None:
            return NotImplemented
        if p[0] == 0:
            raise ZeroDivisionError("division by zero")
        return Surd.make(self.a / p[0], self.b / p[0], self.m)

    def __rtruediv__(self, other):
        p = self._parts(other)
        if p is None:
            return NotImplemented
        return self._inverse() * p[0]

    def __neg__(self):
        return Surd(-self.a, -self.b, self.m)

    def __pos__(self):
        return self

    def __pow__(self, e: int):
        if not isinstance(e, int):
            return NotImplemented
        if e < 0:
            return (1 / self) ** (-e)
        out = Fraction(1)
        for _ in range(e):
            out = self * out
        return out

    def sign(self) -> int:
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sa == sb or sb == 0:
            return sa
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with m b^2
        d = self.a * self.a - self.m * self.b * self.b
        return sa if d > 0 else sb

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def _cmp(self, other) -> int:
        diff = self - other
        if isinstance(diff, Surd):
            return diff.sign()
        return (diff > 0) - (diff < 0)

    def __eq__(self, other):
        if self._parts(other) is None:
            if isinstance(other, float):
                return float(self) == other
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        return hash((self.a, self.b, self.m))

    def __bool__(self):
        return True  # b != 0 by construction

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(self.m)

    def __repr__(self):
        return f"Surd({self.a}, {self.b}, {self.m})"

    def __str__(self):
        return f"{self.a} + {self.b}*sqrt({self.m})" if self.a else f"{self.b}*sqrt({self.m})"


def exact_sqrt(x):
    """Exact nonnegative square root of a rational or surd.

    Returns ``Fraction`` or ``Surd``; raises ``ValueError`` when the root is
    negative or does not lie in a single quadratic field.
    """
    if isinstance(x, Surd):
        if x.sign() < 0:
            raise ValueError("square root of a negative number")
        d = x.a * x.a - x.m * x.b * x.b
        if d < 0:
            raise ValueError(f"sqrt({x}) is not in Q(sqrt({x.m}))")
        s = _rational_sqrt(d)
        if s is None:
            raise ValueError(f"sqrt({x}) is not in Q(sqrt({x.m}))")
        for x2 in ((x.a + s) / 2, (x.a - s) / 2):
            r = _rational_sqrt(x2) if x2 > 0 else None
            if r:
                cand = Surd.make(r, x.b / (2 * r), x.m)
                if cand * cand == x:
                    return cand if cand >= 0 else -cand
        raise ValueError(f"sqrt({x}) is not in Q(sqrt({x.m}))")
    q = Fraction(x)
    if q < 0:
        raise ValueError("square root of a negative number")
    if q == 0:
        return Fraction(0)
    s, m = _squarefree_split(q.numerator * q.denominator)
    if m == 1:
        return Fraction(s, q.denominator)
    return Surd(0, Fraction(s, q.denominator), m)


def _rational_sqrt(q: Fraction):
    if q < 0:
        return None
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def is_exact_value(x) -> bool:
    return isinstance(x, (int, Fraction, Surd)) and not isinstance(x, bool)


def to_exact(x):
    """Convert ints, decimal strings, floats (via repr), Fractions and Surds."""
    if isinstance(x, (Fraction, Surd)):
        return x
    if isinstance(x, bool):
        raise TypeError("boolean is not a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, np.generic):
        return to_exact(x.item())
    raise TypeError(f"cannot convert {x!r} to an exact number")


def sqrt(x):
    """Square root dispatching on the value type."""
    if isinstance(x, (Fraction, Surd, int)) and not isinstance(x, bool):
        return exact_sqrt(x)
    if x < 0:
        raise ValueError("square root of a negative number")
    return math.sqrt(x)


def sign(x) -> int:
    if isinstance(x, Surd):
        return x.sign()
    return int(x > 0) - int(x < 0)


def is_exact(arr) -> bool:
    return isinstance(arr, np.ndarray) and arr.dtype == object


def zeros(shape, exact: bool):
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape)


def asarray(values, exact: bool):
    """Array of the requested backend from nested sequences."""
    if exact:
        arr = np.array(values, dtype=object)
        flat = arr.reshape(-1)
        for idx, v in enumerate(flat):
            flat[idx] = to_exact(v)
        return arr
    arr = np.empty(np.shape(np.array(values, dtype=object)), dtype=float)
    src = np.array(values, dtype=object).reshape(-1)
    out = arr.reshape(-1)
    for idx, v in enumerate(src):
        out[idx] = float(v)
    return arr


def const(q, exact: bool):
    """Backend scalar for a Python rational constant."""
    q = to_exact(q)
    return q if exact else float(q)


def to_float(arr) -> np.ndarray:
    if isinstance(arr, np.ndarray):
        if arr.dtype == object:
            return np.array([float(v) for v in arr.reshape(-1)], dtype=float).reshape(arr.shape)
        return arr.astype(float)
    return float(arr)


def max_abs(arr):
    """Largest absolute entry; exact on object arrays, 0 for empty input."""
    if arr.size == 0:
        return 0
    if arr.dtype == object:
        best = Fraction(0)
        for v in arr.reshape(-1):
            if not v:
                continue
            a = abs(v)
            if a > best:
                best = a
        return best
    return float(np.max(np.abs(arr)))


def scale_signs(T: np.ndarray, s) -> np.ndarray:
    """T * s along the last axis for a vector of +-1 signs; exact arrays negate instead of multiplying."""
    if not is_exact(T):
        return T * np.asarray(s, dtype=float)
    out = T.copy()
    neg = np.asarray(s) < 0
    out[..., neg] = -T[..., neg]
    return out


def einsum(subscripts: str, *ops):
    """np.einsum, with a sparse path for exact (object) operands.

    Exact tensors here are mostly zeros, and multiplying zero Fractions
    dominates the dense object einsum; the sparse path joins nonzero entries.
    """
    if not any(is_exact(o) for o in ops):
        return np.einsum(subscripts, *ops)
    ins, out = subscripts.replace(" ", "").split("->")
    terms = ins.split(",")
    if "..." in subscripts:
        spare = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in subscripts]
        width = max(np.ndim(o) - len(t.replace("...", "")) for o, t in zip(ops, terms) if "..." in t)
        fill = "".join(spare[:width])
        terms = [t.replace("...", fill) for t in terms]
        out = out.replace("...", fill)
    sizes: dict = {}
    for o, t in zip(ops, terms):
        sizes.update(zip(t, np.shape(o)))
    labels: list = []  # labels bound in the partial assignments, in key order
    partial: dict = {(): 1}
    for pos, (o, t) in enumerate(zip(ops, terms)):
        arr = np.asarray(o, dtype=object)
        shared = [c for c in dict.fromkeys(t) if c in labels]
        fresh = [c for c in dict.fromkeys(t) if c not in labels]
        first = {c: t.index(c) for c in dict.fromkeys(t)}
        repeats = [(k, first[c]) for k, c in enumerate(t) if k != first[c]]
        index: dict = {}
        for idx, v in zip(itertools.product(*map(range, arr.shape)), arr.flat):
            if not v or any(idx[k] != idx[f] for k, f in repeats):
                continue
            index.setdefault(tuple(idx[first[c]] for c in shared), []).append(
                (tuple(idx[first[c]] for c in fresh), v))
        where = [labels.index(c) for c in shared]
        labels = labels + fresh
        # labels that are neither output nor used later can be summed out now
        later = set(out).union(*terms[pos + 1:])
        keep = [k for k, c in enumerate(labels) if c in later]
        nxt: dict = {}
        for key, acc in partial.items():
            for add, v in index.get(tuple(key[w] for w in where), ()):
                full = key + add
                k2 = tuple(full[k] for k in keep)
                prod = acc * v
                nxt[k2] = nxt[k2] + prod if k2 in nxt else prod
        labels = [labels[k] for k in keep]
        partial = nxt
        if not partial:
            break
    res = zeros(tuple(sizes[c] for c in out), True)
    pick = [labels.index(c) for c in out] if partial else []
    for key, v in partial.items():
        idx = tuple(key[k] for k in pick)
        res[idx] = res[idx] + v
    return res if out else res[()]


def default_tol(exact: bool):
    return Fraction(0) if exact else FLOAT_TOL


def is_zero(x, tol) -> bool:
    return abs(x) <= tol
