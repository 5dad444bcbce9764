"""Frame conventions for g + g* + R.

Index A runs over 0..2n: A = 0 is the R summand, A = a in 1..n the plus
vectors e_a = v_a + g(v_a), and A = i in n+1..2n the minus vectors
e_i = v_{i'} - g(v_{i'}) with i' = i - n.  Arrays are indexed directly by A.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FrameSignature:
    n: int
    epsilon: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"frame dimension must be an integer >= 2, got {self.n!r}")
        eps = tuple(self.epsilon)
        if len(eps) != self.n:
            raise ValueError(f"epsilon must have length {self.n}, got {len(eps)}")
        for e in eps:
            if isinstance(e, bool) or e not in (1, -1):
                raise ValueError(f"epsilon entries must be +1 or -1, got {e!r}")
        object.__setattr__(self, "epsilon", tuple(int(e) for e in eps))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def signs(self) -> np.ndarray:
        """epsilon_A for A = 0..2n as an int array."""
        eps = np.array(self.epsilon, dtype=int)
        return np.concatenate(([1], eps, -eps))

    def sign(self, A: int) -> int:
        return int(self.signs[A])

    def prime(self, i: int) -> int:
        if not self.n < i <= 2 * self.n:
            raise IndexError(f"{i} is not a minus index")
        return i - self.n

    @property
    def plus(self) -> range:
        """Plus side including the R summand: 0..n."""
        return range(0, self.n + 1)

    @property
    def minus(self) -> range:
        return range(self.n + 1, 2 * self.n + 1)

    def side(self) -> np.ndarray:
        """0 for indices on the plus side (0..n), 1 for the minus side."""
        s = np.zeros(self.dim, dtype=int)
        s[self.n + 1:] = 1
        return s


@dataclass(frozen=True)
class ScalarProduct:
    eta: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        # eta is diagonal with entries +-1
        return self.eta


def build_frame(n: int, epsilon) -> tuple[FrameSignature, ScalarProduct]:
    frame = FrameSignature(n, tuple(epsilon))
    eta = np.diag(frame.signs)
    eta.flags.writeable = False
    return frame, ScalarProduct(eta)


def raise_index(B: np.ndarray, eta: ScalarProduct | np.ndarray) -> np.ndarray:
    """B_AB^C = sum_D B_ABD eta^DC; with diagonal eta this scales the last slot."""
    e = eta.eta if isinstance(eta, ScalarProduct) else np.asarray(eta)
    if B.ndim < 1 or B.shape[-1] != e.shape[0]:
        raise ValueError(f"last axis of size {B.shape[-1] if B.ndim else 0} does not match eta of size {e.shape[0]}")
    d = np.diag(e).astype(int)
    if B.dtype == object:
        return B * d.astype(object)
    return B * d
