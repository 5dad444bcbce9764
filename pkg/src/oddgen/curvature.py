"""Curvature of generalized connections and the generalized Ricci tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import DivergenceOperator, GeneralizedConnection
from .dorfman import DorfmanTensor, TwistingData
from .frame import FrameSignature
from .numeric import default_tol, einsum, is_exact, max_abs, scale_signs, zeros


def _signs(frame: FrameSignature, exact: bool):
    s = frame.signs
    return s.astype(object) if exact else s.astype(float)


@dataclass(frozen=True)
class CurvatureTensor:
    """R_ABCD = <R(e_A, e_B) e_C, e_D>."""

    R: np.ndarray
    frame: FrameSignature


@dataclass(frozen=True)
class RicciComponents:
    """Ricci components in the frame, both stored as n x (n+1) arrays.

    ``plus[i-n-1, a]`` is R^+_{ia} and ``minus[i-n-1, a]`` is R^-_{ai},
    for i in n+1..2n and a in 0..n.
    """

    plus: np.ndarray
    minus: np.ndarray
    frame: FrameSignature

    def plus_at(self, i: int, a: int):
        return self.plus[i - self.frame.n - 1, a]

    def minus_at(self, a: int, i: int):
        return self.minus[i - self.frame.n - 1, a]

    def norm(self):
        return max(max_abs(self.plus), max_abs(self.minus))

    def vanishes(self, tol=None) -> bool:
        tol = default_tol(is_exact(self.plus)) if tol is None else tol
        return self.norm() <= tol


def curvature_tensor(D: GeneralizedConnection, B: DorfmanTensor) -> CurvatureTensor:
    """Brute-force curvature for constant coefficients.

    R(e_A, e_B) e_C = D_A D_B e_C - D_B D_A e_C - D_[e_A, e_B] e_C with
    [e_A, e_B] = B_AB^E e_E.
    """
    frame = D.frame
    s = _signs(frame, D.exact)
    w = D.omega
    wu = scale_signs(w, s)
    Bu = scale_signs(B.B, s)
    R = (einsum("bce,aed->abcd", wu, w)
         - einsum("ace,bed->abcd", wu, w)
         - einsum("abe,ecd->abcd", Bu, w))
    return CurvatureTensor(R, frame)


def ricci_from_curvature(R: CurvatureTensor, frame: FrameSignature | None = None) -> RicciComponents:
    """Partial traces: R^+_{ia} = sum_{b<=n} eps_b R_{biab}, R^-_{ai} = sum_j eps_j R_{jaij}."""
    frame = R.frame if frame is None else frame
    n = frame.n
    exact = is_exact(R.R)
    s = _signs(frame, exact)
    P = list(frame.plus)
    M = list(frame.minus)
    T = R.R
    plus = zeros((n, n + 1), exact)
    minus = zeros((n, n + 1), exact)
    for ii, i in enumerate(M):
        for a in P:
            plus[ii, a] = sum((s[b] * T[b, i, a, b] for b in P), start=plus[ii, a] * 0)
            minus[ii, a] = sum((s[j] * T[j, a, i, j] for j in M), start=minus[ii, a] * 0)
    return RicciComponents(plus, minus, frame)


def _pieces(B: DorfmanTensor, frame: FrameSignature):
    n = frame.n
    exact = B.exact
    s = _signs(frame, exact)
    Bu = scale_signs(B.B, s)
    Pb = slice(1, n + 1)
    Mj = slice(n + 1, 2 * n + 1)
    # sum_{b=1..n} sum_j B_bi^j B_aj^b, indexed [i', a'] for a in 1..n
    quad = einsum("bij,ajb->ia", Bu[Pb, Mj, Mj], Bu[Pb, Mj, Pb])
    return n, exact, s, Bu, Pb, Mj, quad


def ricci_split_EH(B: DorfmanTensor, delta_tilde, frame: FrameSignature | None = None,
                   H=None, alg=None) -> RicciComponents:
    """Ricci components of (E_-, delta~) on the untwisted-by-F bundle; column a = 0 is zero.

    ``delta_tilde`` is either a full length-(2n+1) divergence (its 0-entry is
    ignored) or the length-2n restriction to indices 1..2n.  When ``H`` and
    ``alg`` are given for n >= 4 the closedness of H is checked.
    """
    frame = B.frame if frame is None else frame
    n, exact, s, Bu, Pb, Mj, quad = _pieces(B, frame)
    d = np.asarray(delta_tilde.delta if isinstance(delta_tilde, DivergenceOperator) else delta_tilde)
    if d.shape[0] == 2 * n:
        d = np.concatenate((d[:1] * 0, d))
    if H is not None and alg is not None and n >= 4:
        from .canon import ce_differential
        if max_abs(ce_differential(H, alg)) > default_tol(exact):
            raise ValueError("H is not closed; the split formula needs dH = 0")
    plus = zeros((n, n + 1), exact)
    minus = zeros((n, n + 1), exact)
    lin_p = einsum("iab,b->ia", Bu[Mj, Pb, Pb], d[1:n + 1])
    lin_m = einsum("aij,j->ia", Bu[Pb, Mj, Mj], d[n + 1:])
    plus[:, 1:] = quad + lin_p
    minus[:, 1:] = quad + lin_m
    return RicciComponents(plus, minus, frame)


def ricci_F_terms(F: np.ndarray, delta, frame: FrameSignature, B: DorfmanTensor) -> RicciComponents:
    """Difference between the full Ricci components and the E_H split."""
    n = frame.n
    exact = is_exact(F)
    s = _signs(frame, exact)
    eps = s[1:n + 1]
    d = np.asarray(delta.delta if isinstance(delta, DivergenceOperator) else delta)
    plus = zeros((n, n + 1), exact)
    minus = zeros((n, n + 1), exact)
    ff = einsum("ib,b,ab->ia", F, eps, F)
    plus[:, 1:] = F * d[0] - ff
    minus[:, 1:] = -ff
    i0, m0 = _zero_column(F, d, frame, B, exact, s)
    plus[:, 0] = i0
    minus[:, 0] = m0
    return RicciComponents(plus, minus, frame)


def _zero_column(F, d, frame, B, exact, s):
    n = frame.n
    eps = s[1:n + 1]
    Bbij = B.B[1:n + 1, n + 1:, n + 1:]
    # sum_b sum_j eps_j' eps_b F_j'b B_bij
    common = einsum("j,b,jb,bij->i", eps, eps, F, Bbij)
    i0 = -common - einsum("ib,b,b->i", F, eps, d[1:n + 1])
    m0 = -common - einsum("ij,j,j->i", F, eps, d[n + 1:])
    return i0, m0


def ricci_closed_form(B: DorfmanTensor, twist: TwistingData | np.ndarray, delta: DivergenceOperator,
                      frame: FrameSignature | None = None) -> RicciComponents:
    """Closed-form Ricci components of (E_-, delta), including the a = 0 column."""
    frame = B.frame if frame is None else frame
    F = twist.F if isinstance(twist, TwistingData) else np.asarray(twist)
    split = ricci_split_EH(B, delta, frame)
    extra = ricci_F_terms(F, delta, frame, B)
    return RicciComponents(split.plus + extra.plus, split.minus + extra.minus, frame)
