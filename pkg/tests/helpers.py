"""Random scenes for tests."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from oddgen.canon import closed_two_form, random_algebra, random_form
from oddgen.connection import DivergenceOperator
from oddgen.dorfman import TwistingData
from oddgen.einstein import Scene


def random_delta(rng, n, exact):
    if exact:
        return np.array([Fraction(int(rng.integers(-8, 9)), 4) for _ in range(2 * n + 1)], dtype=object)
    return rng.uniform(-2, 2, 2 * n + 1)


def random_scene(rng, exact=False, kind=None) -> Scene:
    alg = random_algebra(rng, exact=exact, kind=kind)
    H = random_form(rng, 3, 3, exact)
    F = closed_two_form(rng, alg, exact)
    return Scene(alg, TwistingData(H, F), DivergenceOperator(random_delta(rng, 3, exact)))


def fmax(arr) -> float:
    return float(np.max(np.abs(np.asarray(arr, dtype=float)))) if np.size(arr) else 0.0
