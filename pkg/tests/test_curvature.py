from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import fmax, random_delta, random_scene
from oracles import ricci_oracle
from oddgen.canon import L1, bracket_from_L, random_form
from oddgen.connection import (DivergenceOperator, GeneralizedConnection, alt_increment,
                               d0_connection, divergence_of, levi_civita)
from oddgen.curvature import (curvature_tensor, ricci_closed_form, ricci_F_terms,
                              ricci_from_curvature, ricci_split_EH)
from oddgen.dorfman import DorfmanTensor, MetricLieAlgebra, TwistingData, algebra_from_brackets, dorfman_coefficients
from oddgen.frame import build_frame
from oddgen.numeric import zeros


def _ricci_brute(B, delta):
    return ricci_from_curvature(curvature_tensor(levi_civita(B, delta), B))


def test_zero_data_zero_curvature():
    f, _ = build_frame(3, (1, 1, 1))
    B = DorfmanTensor(zeros((7, 7, 7), True), f)
    R = curvature_tensor(GeneralizedConnection(zeros((7, 7, 7), True), f), B)
    assert fmax(R.R) == 0
    assert ricci_from_curvature(R).norm() == 0


def test_abelian_d0_flat():
    alg = algebra_from_brackets((1, -1, 1), {})
    B = dorfman_coefficients(alg, TwistingData.three())
    assert fmax(curvature_tensor(d0_connection(B), B).R) == 0


def test_closed_form_vanishes_without_data():
    f, _ = build_frame(3, (1, 1, -1))
    B = DorfmanTensor(zeros((7, 7, 7), True), f)
    d = DivergenceOperator(np.array([Fraction(v) for v in (3, 1, -2, 5, 0, 1, 7)], dtype=object))
    assert ricci_closed_form(B, zeros((3, 3), True), d, f).norm() == 0


@pytest.mark.parametrize("exact", [True, False])
def test_three_ricci_computations_agree(rng, exact):
    for _ in range(10 if exact else 40):
        sc = random_scene(rng, exact)
        B = sc.dorfman()
        closed = ricci_closed_form(B, sc.twist, sc.delta)
        brute = _ricci_brute(B, sc.delta)
        p, m = ricci_oracle(levi_civita(B, sc.delta).omega, B.B, B.frame.signs.tolist())
        for got in ((brute.plus, brute.minus), (p, m)):
            if exact:
                assert np.array_equal(closed.plus, got[0]) and np.array_equal(closed.minus, got[1])
            else:
                assert fmax(closed.plus - got[0]) < 1e-10 and fmax(closed.minus - got[1]) < 1e-10


@given(st.integers(0, 2**32 - 1))
def test_d0_curvature_blocks(seed):
    sc = random_scene(np.random.default_rng(seed), False)
    B = sc.dorfman()
    R = curvature_tensor(d0_connection(B), B).R
    Bu = B.raised()
    P, M = slice(0, 4), slice(4, 7)
    # plus indices a, c, d; minus j; l summed over the minus side
    pred = (2 / 3 * np.einsum("ajl,cld->ajcd", Bu[P, M, M], B.B[P, M, P])
            + 1 / 3 * np.einsum("jcl,lad->ajcd", Bu[M, P, M], B.B[M, P, P])
            + 1 / 3 * np.einsum("cal,ljd->ajcd", Bu[P, P, M], B.B[M, M, P]))
    assert fmax(R[P, M, P, P] - pred) < 1e-12
    pred2 = (2 / 3 * np.einsum("ibc,kcl->ibkl", Bu[M, P, P], B.B[M, P, M])
             + 1 / 3 * np.einsum("bkc,cil->ibkl", Bu[P, M, P], B.B[P, M, M])
             + 1 / 3 * np.einsum("kic,cbl->ibkl", Bu[M, M, P], B.B[P, P, M]))
    assert fmax(R[M, P, M, M] - pred2) < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_curvature_antisymmetries(seed):
    rng = np.random.default_rng(seed)
    sc = random_scene(rng, False)
    B = sc.dorfman()
    R = curvature_tensor(levi_civita(B, sc.delta), B).R
    assert fmax(R + R.transpose(1, 0, 2, 3)) < 1e-12
    assert fmax(R + R.transpose(0, 1, 3, 2)) < 1e-12


def test_split_equals_full_when_F_vanishes(rng):
    for _ in range(20):
        sc = random_scene(rng, True)
        B = dorfman_coefficients(sc.alg, TwistingData(sc.twist.H, zeros((3, 3), True)))
        d = sc.delta.delta.copy()
        d[0] = Fraction(0)
        full = ricci_closed_form(B, zeros((3, 3), True), DivergenceOperator(d))
        split = ricci_split_EH(B, d)
        assert np.array_equal(full.plus, split.plus) and np.array_equal(full.minus, split.minus)


def test_split_diagonal_entry():
    for eps in ((1, 1, 1), (1, -1, 1), (-1, 1, 1)):
        a1, a2, a3, h = Fraction(3), Fraction(-1, 2), Fraction(5, 3), Fraction(2)
        alg = bracket_from_L(L1(a1, a2, a3), eps)
        B = dorfman_coefficients(alg, TwistingData.three(h))
        X2, X3 = -h - a1 + a2 - a3, -h - a1 - a2 + a3
        Y2, Y3 = -h + a1 - a2 + a3, -h + a1 + a2 - a3
        R = ricci_split_EH(B, zeros(7, True))
        assert R.plus_at(4, 1) == -Fraction(eps[1] * eps[2], 4) * (X2 * Y3 + X3 * Y2)


def test_split_accepts_restricted_divergence(rng):
    sc = random_scene(rng, True)
    B = sc.dorfman()
    a = ricci_split_EH(B, sc.delta.delta)
    b = ricci_split_EH(B, sc.delta.delta[1:])
    assert np.array_equal(a.plus, b.plus)


@given(st.integers(0, 2**32 - 1))
def test_decomposition_identity(seed):
    sc = random_scene(np.random.default_rng(seed), True)
    B = sc.dorfman()
    F, d = sc.twist.F, sc.delta.delta
    full = ricci_closed_form(B, sc.twist, sc.delta)
    split = ricci_split_EH(B, d)
    eps = sc.alg.epsilon
    for i in range(3):
        for a in range(1, 4):
            want = F[i, a - 1] * d[0] - sum(eps[b] * F[i, b] * F[a - 1, b] for b in range(3))
            assert full.plus[i, a] - split.plus[i, a] == want
    assert ricci_F_terms(F, d, B.frame, B).plus[:, 1:].tolist() == (full.plus - split.plus)[:, 1:].tolist()


@given(st.integers(0, 2**32 - 1), st.sampled_from("+-"))
def test_ricci_independent_of_connection(seed, side):
    rng = np.random.default_rng(seed)
    sc = random_scene(rng, False)
    B = sc.dorfman()
    f = B.frame
    idx = list(range(0, 4)) if side == "+" else list(range(4, 7))
    s = np.zeros((7, 7, 7))
    sub = rng.normal(size=(len(idx),) * 3)
    s[np.ix_(idx, idx, idx)] = sub + sub.transpose(1, 0, 2)
    inc = alt_increment(s, side, f)
    lam = divergence_of(inc).delta
    D1 = levi_civita(B, sc.delta)
    D2 = levi_civita(B, DivergenceOperator(sc.delta.delta - lam)) + inc
    assert fmax(divergence_of(D2).delta - sc.delta.delta) < 1e-12
    r1 = ricci_from_curvature(curvature_tensor(D1, B))
    r2 = ricci_from_curvature(curvature_tensor(D2, B))
    assert fmax(r1.plus - r2.plus) < 1e-10 and fmax(r1.minus - r2.minus) < 1e-10


def test_split_flags_non_closed_H_in_dimension_four():
    from oddgen.canon import ce_differential
    f, _ = build_frame(4, (1, 1, 1, 1))
    k = zeros((4, 4, 4), True)
    k[0, 1, 1], k[1, 0, 1] = Fraction(1), Fraction(-1)  # [v1, v2] = v2, not unimodular
    alg = MetricLieAlgebra(f, k)
    H = zeros((4, 4, 4), True)
    for p, sg in (((1, 2, 3), 1), ((2, 3, 1), 1), ((3, 1, 2), 1), ((2, 1, 3), -1), ((1, 3, 2), -1), ((3, 2, 1), -1)):
        H[p] = Fraction(sg)
    assert fmax(ce_differential(H, alg)) != 0
    B = dorfman_coefficients(alg, TwistingData(H, zeros((4, 4), True)))
    with pytest.raises(ValueError, match="not closed"):
        ricci_split_EH(B, zeros(9, True), H=H, alg=alg)
