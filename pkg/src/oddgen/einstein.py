"""The odd generalized Einstein residual system and the Einstein predicate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .connection import DivergenceOperator
from .curvature import ricci_closed_form, ricci_split_EH
from .dorfman import DorfmanTensor, MetricLieAlgebra, TwistingData, dorfman_coefficients
from .numeric import Surd, asarray, default_tol, einsum, is_exact, max_abs, scale_signs, to_float

GROUPS = ("G1", "G2", "G3", "G4")


class InvalidSceneError(ValueError):
    """Scene data violating a structural constraint of the Courant algebroid."""


@dataclass(frozen=True)
class Scene:
    alg: MetricLieAlgebra
    twist: TwistingData
    delta: DivergenceOperator
    _B: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        n = self.alg.n
        if self.twist.n != n or self.delta.n != n:
            raise InvalidSceneError(
                f"inconsistent dimensions: algebra {n}, twist {self.twist.n}, delta {self.delta.n}")
        ex = self.alg.exact
        if is_exact(self.twist.F) != ex or self.delta.exact != ex:
            raise InvalidSceneError("scene parts use different numeric backends")
        self.validate()

    @property
    def n(self) -> int:
        return self.alg.n

    @property
    def exact(self) -> bool:
        return self.alg.exact

    @property
    def frame(self):
        return self.alg.frame

    def validate(self, tol=None) -> None:
        """dF = 0, and dH + F^F = 0 when n >= 4 (automatic for n = 3)."""
        from .canon import ce_differential, wedge
        tol = default_tol(self.exact) if tol is None else tol
        dF = ce_differential(self.twist.F, self.alg)
        if max_abs(dF) > tol:
            bad = _first_nonzero(dF, tol)
            raise InvalidSceneError(f"F is not closed: dF{bad} != 0 (the twist must satisfy dF = 0)")
        if self.n >= 4:
            c = ce_differential(self.twist.H, self.alg) + wedge(self.twist.F, self.twist.F)
            if max_abs(c) > tol:
                raise InvalidSceneError("dH + F^F != 0")

    def dorfman(self) -> DorfmanTensor:
        if not self._B:
            self._B.append(dorfman_coefficients(self.alg, self.twist))
        return self._B[0]

    def to_float(self) -> "Scene":
        return Scene(self.alg.to_float(),
                     TwistingData(to_float(self.twist.H), to_float(self.twist.F)),
                     DivergenceOperator(to_float(self.delta.delta)))

    def with_twist(self, twist: TwistingData) -> "Scene":
        return Scene(self.alg, twist, self.delta)

    def with_delta(self, delta) -> "Scene":
        d = delta if isinstance(delta, DivergenceOperator) else DivergenceOperator(asarray(delta, self.exact))
        return Scene(self.alg, self.twist, d)


def _first_nonzero(arr, tol):
    for idx in np.ndindex(arr.shape):
        if abs(arr[idx]) > tol:
            return tuple(i + 1 for i in idx)
    return ()


@dataclass(frozen=True)
class EinsteinResidual:
    """The four relation groups.

    ``G1[i-n-1, a-1]`` and ``G4[i-n-1, a-1]`` for i in n+1..2n, a in 1..n;
    ``G2[i-n-1]`` is the (i, 0) relation and ``G3[a-1]`` the one indexed by a.
    """

    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    G4: np.ndarray

    @property
    def n(self) -> int:
        return self.G2.shape[0]

    @property
    def norm(self):
        return max(max_abs(g) for g in (self.G1, self.G2, self.G3, self.G4))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.G1.reshape(-1), self.G2, self.G3, self.G4.reshape(-1)])

    def rows(self):
        """(group, i, a, value) with frame indices; G3 rows use i = a + n and a = 0."""
        n = self.n
        for i in range(n):
            for a in range(n):
                yield "G1", i + n + 1, a + 1, self.G1[i, a]
        for i in range(n):
            yield "G2", i + n + 1, 0, self.G2[i]
        for a in range(n):
            yield "G3", a + n + 1, 0, self.G3[a]
        for i in range(n):
            for a in range(n):
                yield "G4", i + n + 1, a + 1, self.G4[i, a]


def residual_groups(B: DorfmanTensor | np.ndarray, F: np.ndarray, d: np.ndarray, frame=None):
    """Raw evaluation of the four groups from B, F and the divergence vector.

    Leading batch axes are allowed on plain arrays (float solver path).
    """
    frame = B.frame if frame is None else frame
    n = frame.n
    T = B.B if isinstance(B, DorfmanTensor) else B
    exact = is_exact(T)
    if exact:
        fast = _scaled_integer_groups(T, F, d, frame)
        if fast is not None:
            return fast
    s = frame.signs
    s = s.astype(object) if exact else s.astype(float)
    eps = s[1:n + 1]
    P = slice(1, n + 1)
    M = slice(n + 1, 2 * n + 1)
    Bu = scale_signs(T, s)
    dP, dM, d0 = d[..., P], d[..., M], d[..., 0, None, None]
    quad = einsum("...bij,...ajb->...ia", Bu[..., P, M, M], Bu[..., P, M, P])
    G1 = (quad + einsum("...iab,...b->...ia", Bu[..., M, P, P], dP) + F * d0
          - einsum("...ib,b,...ab->...ia", F, eps, F))
    G2 = (einsum("b,j,...jb,...bij->...i", eps, eps, F, T[..., P, M, M])
          + einsum("b,...ib,...b->...i", eps, F, dP))
    G3 = einsum("...ab,b,...b->...a", F, eps, dP - dM)
    G4 = (einsum("b,...iab,...b->...ia", eps, T[..., M, P, P], dP)
          - einsum("b,...iab,...b->...ia", eps, T[..., M, P, M], dM) + d0 * F)
    return G1, G2, G3, G4


def _scaled_integer_groups(T, F, d, frame):
    """Exact groups via integer-valued float arithmetic.

    Every group G is homogeneous of degree two in (B, F, delta).  Input over
    Q(sqrt m) splits as X = P + sqrt(m) Q with rational P, Q, and then
    G(X) = G(P) + m G(Q) + sqrt(m) (G(P + Q) - G(P) - G(Q)).  Clearing a common
    denominator D scales each evaluation by D**2.  Returns None for mixed
    radicands or when the scaled integers could overflow.
    """
    arrs = (T, F, d)
    ms = {v.m for arr in arrs for v in arr.flat if isinstance(v, Surd)}
    if len(ms) > 1:
        return None
    m = ms.pop() if ms else None
    rat, irr = [], []
    for a in arrs:
        r, i = {}, {}
        for k, v in enumerate(a.flat):
            if not v:
                continue
            if isinstance(v, Surd):
                r[k], i[k] = v.a, v.b
            else:
                r[k] = Fraction(v)
        rat.append({k: v for k, v in r.items() if v})
        irr.append({k: v for k, v in i.items() if v})
    D = math.lcm(1, *(v.denominator for x in rat + irr for v in x.values()))

    def scaled(parts):
        out = []
        for x, a in zip(parts, arrs):
            y = np.zeros(a.size)
            for k, v in x.items():
                y[k] = v.numerator * (D // v.denominator)
            out.append(y.reshape(a.shape))
        if max(float(np.max(np.abs(x), initial=0)) for x in out) > _INT_LIMIT:
            raise OverflowError
        return out

    try:
        P = scaled(rat)
        GP = residual_groups(*P, frame)
        if m is None:
            return tuple(_as_fractions(g, D * D) for g in GP)
        Q = scaled(irr)
    except OverflowError:
        return None
    GQ = residual_groups(*Q, frame)
    GS = residual_groups(*(p + q for p, q in zip(P, Q)), frame)
    out = []
    for gp, gq, gs in zip(GP, GQ, GS):
        a = _as_fractions(gp + m * gq, D * D)
        b = _as_fractions(gs - gp - gq, D * D)
        e = np.empty(gp.shape, dtype=object)
        e.flat[:] = [Surd.make(x, y, m) for x, y in zip(a.flat, b.flat)]
        out.append(e)
    return tuple(out)


def _as_fractions(g, den):
    e = np.empty(g.shape, dtype=object)
    e.flat[:] = [Fraction(int(v), den) for v in g.flat]
    return e


# scaled entries below 2**20 keep every product and sum under 2**53, so the
# float64 evaluation is exact
_INT_LIMIT = 2 ** 20


def einstein_residual(scene: Scene) -> EinsteinResidual:
    B = scene.dorfman()
    return EinsteinResidual(*residual_groups(B, scene.twist.F, scene.delta.delta))


def is_einstein(scene: Scene, tol=None) -> bool:
    """Residual system and direct Ricci vanishing, both within tol."""
    tol = default_tol(scene.exact) if tol is None else tol
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if einstein_residual(scene).norm > tol:
        return False
    ric = ricci_closed_form(scene.dorfman(), scene.twist, scene.delta)
    return ric.norm() <= tol


def forapplic_residual(scene: Scene) -> dict[str, np.ndarray]:
    """The n = 3 system written out component by component (four blocks)."""
    if scene.n != 3:
        raise ValueError("the componentwise system is stated for n = 3")
    B = scene.dorfman()
    T = B.B
    F = scene.twist.F
    d = scene.delta.delta
    e1, e2, e3 = scene.alg.epsilon
    Rt = ricci_split_EH(B, d)

    def R(i, a):
        return Rt.plus_at(i, a)

    def f(a, b):
        return F[a - 1, b - 1]

    d0 = d[0]
    rel1 = [
        R(4, 1) - (e2 * f(1, 2) ** 2 + e3 * f(1, 3) ** 2),
        R(5, 1) - (d0 * f(1, 2) + e3 * f(2, 3) * f(1, 3)),
        R(6, 1) - (d0 * f(1, 3) + e2 * f(3, 2) * f(1, 2)),
        R(4, 2) - (-d0 * f(1, 2) + e3 * f(1, 3) * f(2, 3)),
        R(5, 2) - (e1 * f(1, 2) ** 2 + e3 * f(2, 3) ** 2),
        R(6, 2) - (d0 * f(2, 3) + e1 * f(1, 2) * f(1, 3)),
        R(4, 3) - (-d0 * f(1, 3) + e2 * f(1, 2) * f(3, 2)),
        R(5, 3) - (-d0 * f(2, 3) + e1 * f(2, 1) * f(3, 1)),
        R(6, 3) - (e1 * f(1, 3) ** 2 + e2 * f(2, 3) ** 2),
    ]
    rel2 = [
        f(1, 2) * e2 * (d[2] - e1 * T[1, 4, 5]) + f(1, 3) * e3 * (d[3] - e1 * T[1, 4, 6])
        + f(2, 3) * e2 * e3 * (T[3, 4, 5] - T[2, 4, 6]),
        f(1, 2) * e1 * (e2 * T[2, 5, 4] - d[1]) + e1 * e3 * f(1, 3) * (T[3, 5, 4] - T[1, 5, 6])
        + f(2, 3) * e3 * (d[3] - e2 * T[2, 5, 6]),
        f(1, 2) * e1 * e2 * (T[2, 6, 4] - T[1, 6, 5]) + f(1, 3) * e1 * (e3 * T[3, 6, 4] - d[1])
        + f(2, 3) * e2 * (e3 * T[3, 6, 5] - d[2]),
        f(1, 2) * e2 * (d[2] - d[5]) + f(1, 3) * e3 * (d[3] - d[6]),
        f(2, 1) * e1 * (d[1] - d[4]) + f(2, 3) * e3 * (d[3] - d[6]),
        f(3, 1) * e1 * (d[1] - d[4]) + f(3, 2) * e2 * (d[2] - d[5]),
    ]
    rel3 = [
        d0 * f(1, 2) - (e2 * T[5, 1, 2] * d[2] + e3 * T[5, 1, 3] * d[3]
                        - e1 * T[5, 1, 4] * d[4] - e3 * T[5, 1, 6] * d[6]),
        d0 * f(1, 3) - (e2 * T[6, 1, 2] * d[2] + e3 * T[6, 1, 3] * d[3]
                        - e1 * T[6, 1, 4] * d[4] - e2 * T[6, 1, 5] * d[5]),
        d0 * f(2, 3) - (e1 * T[6, 2, 1] * d[1] + e3 * T[6, 2, 3] * d[3]
                        - e1 * T[6, 2, 4] * d[4] - e2 * T[6, 2, 5] * d[5]),
    ]
    rel4 = [
        e2 * T[4, 1, 2] * d[2] + e3 * T[4, 1, 3] * d[3] - e2 * T[4, 1, 5] * d[5] - e3 * T[4, 1, 6] * d[6],
        e1 * T[5, 2, 1] * d[1] + e3 * T[5, 2, 3] * d[3] - e1 * T[5, 2, 4] * d[4] - e3 * T[5, 2, 6] * d[6],
        e1 * T[6, 3, 1] * d[1] + e2 * T[6, 3, 2] * d[2] - e1 * T[6, 3, 4] * d[4] - e2 * T[6, 3, 5] * d[5],
        e1 * T[4, 2, 1] * d[1] + e2 * T[5, 1, 2] * d[2] + e3 * (T[5, 1, 3] + T[4, 2, 3]) * d[3]
        - e1 * T[5, 1, 4] * d[4] - e2 * T[4, 2, 5] * d[5] - e3 * (T[5, 1, 6] + T[4, 2, 6]) * d[6],
        e1 * T[4, 3, 1] * d[1] + e2 * (T[6, 1, 2] + T[4, 3, 2]) * d[2] + e3 * T[6, 1, 3] * d[3]
        - e1 * T[6, 1, 4] * d[4] - e2 * (T[6, 1, 5] + T[4, 3, 5]) * d[5] - e3 * T[4, 3, 6] * d[6],
        e1 * (T[6, 2, 1] + T[5, 3, 1]) * d[1] + e2 * T[5, 3, 2] * d[2] + e3 * T[6, 2, 3] * d[3]
        - e1 * (T[6, 2, 4] + T[5, 3, 4]) * d[4] - e2 * T[6, 2, 5] * d[5] - e3 * T[5, 3, 6] * d[6],
    ]
    dt = object if scene.exact else float
    return {name: np.array(v, dtype=dt) for name, v in
            (("rel1", rel1), ("rel2", rel2), ("rel3", rel3), ("rel4", rel4))}


def forapplic_norm(scene: Scene):
    return max(max_abs(v) for v in forapplic_residual(scene).values())
