"""Left-invariant Levi-Civita generalized connections with prescribed divergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dorfman import DorfmanTensor
from .frame import FrameSignature
from .numeric import const, default_tol, einsum, is_exact, max_abs, scale_signs, zeros


def _signs(frame: FrameSignature, exact: bool):
    s = frame.signs
    return s.astype(object) if exact else s.astype(float)


@dataclass(frozen=True)
class GeneralizedConnection:
    """Lowered coefficients omega_ABC = <D_{e_A} e_B, e_C>."""

    omega: np.ndarray
    frame: FrameSignature

    def __post_init__(self):
        d = self.frame.dim
        if self.omega.shape != (d, d, d):
            raise ValueError(f"omega must have shape {(d, d, d)}")
        self.omega.flags.writeable = False

    @property
    def exact(self) -> bool:
        return is_exact(self.omega)

    def raised(self) -> np.ndarray:
        """omega_AB^C."""
        return scale_signs(self.omega, self.frame.signs)

    def __add__(self, other: "GeneralizedConnection") -> "GeneralizedConnection":
        return GeneralizedConnection(self.omega + other.omega, self.frame)

    def __sub__(self, other: "GeneralizedConnection") -> "GeneralizedConnection":
        return GeneralizedConnection(self.omega - other.omega, self.frame)

    def metric_defect(self):
        return max_abs(self.omega + self.omega.transpose(0, 2, 1))

    def mixed_block(self) -> np.ndarray:
        """Entries omega_{A b c} with b and c on different sides."""
        side = self.frame.side()
        mask = side[:, None] != side[None, :]
        return self.omega[:, mask]

    def preserves_minus(self, tol=None) -> bool:
        tol = default_tol(self.exact) if tol is None else tol
        return max_abs(self.mixed_block()) <= tol


@dataclass(frozen=True)
class DivergenceOperator:
    delta: np.ndarray

    def __post_init__(self):
        if self.delta.ndim != 1 or self.delta.shape[0] % 2 != 1 or self.delta.shape[0] < 5:
            raise ValueError("delta must be a vector of length 2n+1 with n >= 2")
        self.delta.flags.writeable = False

    @property
    def n(self) -> int:
        return (self.delta.shape[0] - 1) // 2

    @property
    def exact(self) -> bool:
        return is_exact(self.delta)

    def __getitem__(self, A):
        return self.delta[A]


def d0_connection(B: DorfmanTensor, frame: FrameSignature | None = None) -> GeneralizedConnection:
    """Divergence-free Levi-Civita connection built from thirds of B on pure blocks."""
    frame = B.frame if frame is None else frame
    exact = B.exact
    side = frame.side()
    same_bc = side[None, :, None] == side[None, None, :]
    same_abc = same_bc & (side[:, None, None] == side[None, :, None])
    third = const("1/3", exact)
    one = const(1, exact)
    zero = const(0, exact)
    w = np.where(same_abc, third, np.where(same_bc, one, zero))
    if exact:
        w = w.astype(object)
    return GeneralizedConnection(B.B * w, frame)


def _alt_unit(frame: FrameSignature, P: int, Q: int, coef, exact: bool) -> np.ndarray:
    """Lowered alt((e^P)^2 (x) e^Q) times coef."""
    out = zeros((frame.dim,) * 3, exact)
    out[P, P, Q] += coef
    out[P, Q, P] -= coef
    return out


def divergence_correction(delta: DivergenceOperator, frame: FrameSignature) -> GeneralizedConnection:
    """Increment S with divergence delta, using the slots e^0, e^1, e^{n+1}, e^{n+2}."""
    n = frame.n
    if n < 2:
        raise ValueError("the divergence correction needs n >= 2")
    if delta.n != n:
        raise ValueError(f"delta has length {delta.delta.shape[0]}, expected {frame.dim}")
    exact = delta.exact
    d = delta.delta
    eps = frame.signs
    S = zeros((frame.dim,) * 3, exact)
    S -= _alt_unit(frame, 1, 0, d[0] * int(eps[1]), exact)
    S -= _alt_unit(frame, n + 2, n + 1, d[n + 1] * int(eps[n + 2]), exact)
    for A in range(1, n + 1):
        S -= _alt_unit(frame, 0, A, d[A], exact)
    for A in range(n + 2, 2 * n + 1):
        S -= _alt_unit(frame, n + 1, A, int(eps[n + 1]) * d[A], exact)
    return GeneralizedConnection(S, frame)


def alt_increment(sigma: np.ndarray, side: str, frame: FrameSignature) -> GeneralizedConnection:
    """<alt(sigma)_u v, w> = sigma(u, v, w) - sigma(u, w, v) for sigma on one side."""
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    exact = is_exact(sigma)
    tol = default_tol(exact)
    if sigma.shape != (frame.dim,) * 3:
        raise ValueError(f"sigma must have shape {(frame.dim,) * 3}")
    if max_abs(sigma - sigma.transpose(1, 0, 2)) > tol:
        raise ValueError("sigma must be symmetric in its first two slots")
    idx = list(frame.plus if side == "+" else frame.minus)
    inside = np.zeros(frame.dim, dtype=bool)
    inside[idx] = True
    mask = inside[:, None, None] & inside[None, :, None] & inside[None, None, :]
    if max_abs(sigma[~mask]) > tol:
        raise ValueError(f"sigma has components outside the {side} side")
    return GeneralizedConnection(sigma - sigma.transpose(0, 2, 1), frame)


def covector_square_tensor(alpha, beta, frame: FrameSignature) -> np.ndarray:
    """sigma = alpha^2 (x) beta as a full array."""
    a = np.asarray(alpha)
    b = np.asarray(beta)
    return einsum("a,b,c->abc", a, a, b)


def pairing(alpha, beta, frame: FrameSignature):
    """<alpha, beta> for covectors, using eta^{-1} = eta."""
    a = np.asarray(alpha)
    exact = a.dtype == object
    return np.sum(a * np.asarray(beta) * _signs(frame, exact))


def torsion(D: GeneralizedConnection, B: DorfmanTensor) -> np.ndarray:
    """T_ABC = omega_ABC - omega_BAC - B_ABC + omega_CAB."""
    w = D.omega
    if w.shape != B.B.shape:
        raise ValueError("connection and Dorfman tensor shapes differ")
    return w - w.transpose(1, 0, 2) - B.B + w.transpose(1, 2, 0)


def divergence_of(D: GeneralizedConnection, frame: FrameSignature | None = None) -> DivergenceOperator:
    """(delta^D)_B = sum_A omega_AB^A."""
    frame = D.frame if frame is None else frame
    up = scale_signs(D.omega, frame.signs)
    return DivergenceOperator(einsum("aba->b", up))


def levi_civita(B: DorfmanTensor, delta: DivergenceOperator) -> GeneralizedConnection:
    """D^0 + S(delta)."""
    return d0_connection(B) + divergence_correction(delta, B.frame)
