from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import fmax, random_scene
from oracles import residual_oracle
from oddgen import atlas
from oddgen.canon import L1, L5, bracket_from_L
from oddgen.connection import DivergenceOperator
from oddgen.curvature import ricci_closed_form, ricci_split_EH
from oddgen.dorfman import TwistingData, algebra_from_brackets
from oddgen.einstein import (GROUPS, InvalidSceneError, Scene, einstein_residual, forapplic_norm,
                             forapplic_residual, is_einstein)
from oddgen.atlas import SQRT2
from oddgen.numeric import asarray


def _scene(alg, h, F12, F13, F23, d, exact=True):
    return Scene(alg, TwistingData.three(h, F12, F13, F23, exact=exact),
                 DivergenceOperator(asarray(d, exact)))


def test_abelian_flat_scene_is_einstein():
    alg = algebra_from_brackets((1, 1, 1), {})
    sc = _scene(alg, 0, 0, 0, 0, [0] * 7)
    assert einstein_residual(sc).norm == 0
    assert is_einstein(sc)


def test_diag_root_and_perturbation():
    alg = bracket_from_L(L1(2, 1, 2), (1, 1, 1))
    good = _scene(alg, -1, 0, 1, 0, [0] * 7)
    assert einstein_residual(good).norm == 0
    bad = _scene(alg, -1, 0, 2, 0, [0] * 7)
    res = einstein_residual(bad)
    assert res.G1[0, 0] == -3
    assert res.norm == 3
    assert not is_einstein(bad)
    assert not is_einstein(bad.to_float())


def test_l5_instance():
    alg = bracket_from_L(L5(0), (1, 1, -1))
    r = -2 * SQRT2
    sc = _scene(alg, 0, 1, 0, -1, [0, r, 0, r, r, 0, r])
    assert einstein_residual(sc).norm == 0
    assert is_einstein(sc)
    assert einstein_residual(sc.to_float()).norm < 1e-12


def test_deg_f0_instance():
    sc = atlas.generate_family("DEG_F0", {"eps": (1, 1, -1), "lam": 0, "mu": 1, "rho": 1})
    assert list(sc.delta.delta) == [0, 0, 1, -1, 0, 1, -1]
    assert sc.twist.H[0, 1, 2] == 0
    assert einstein_residual(sc).norm == 0


@pytest.mark.parametrize("exact", [True, False])
def test_residual_matches_loop_oracle(rng, exact):
    for _ in range(25):
        sc = random_scene(rng, exact)
        B = sc.dorfman()
        got = einstein_residual(sc)
        want = residual_oracle(B.B, sc.twist.F, sc.delta.delta, B.frame.signs.tolist())
        for g, w in zip((got.G1, got.G2, got.G3, got.G4), want):
            if exact:
                assert np.array_equal(g, w)
            else:
                assert fmax(g - w) < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_componentwise_system_is_the_same_system(seed):
    sc = random_scene(np.random.default_rng(seed), True)
    r = einstein_residual(sc)
    f = forapplic_residual(sc)
    G4 = r.G4
    assert list(f["rel1"]) == list(r.G1.T.reshape(-1))
    assert list(f["rel2"]) == list(r.G2) + list(r.G3)
    assert list(f["rel3"]) == [-G4[1, 0], -G4[2, 0], -G4[2, 1]]
    assert list(f["rel4"]) == [G4[0, 0], G4[1, 1], G4[2, 2], G4[0, 1] + G4[1, 0],
                               G4[0, 2] + G4[2, 0], G4[1, 2] + G4[2, 1]]
    assert (forapplic_norm(sc) == 0) == (r.norm == 0)


@given(st.integers(0, 2**32 - 1))
def test_groups_are_ricci_entries(seed):
    sc = random_scene(np.random.default_rng(seed), True)
    r = einstein_residual(sc)
    ric = ricci_closed_form(sc.dorfman(), sc.twist, sc.delta)
    diff = ric.plus - ric.minus
    assert np.array_equal(r.G1, ric.plus[:, 1:])
    assert np.array_equal(r.G2, -ric.plus[:, 0])
    assert np.array_equal(r.G4, diff[:, 1:])
    assert np.array_equal(r.G3, -diff[:, 0])
    split = ricci_split_EH(sc.dorfman(), sc.delta)
    F, d, eps = sc.twist.F, sc.delta.delta, sc.alg.epsilon
    for i in range(3):
        for a in range(3):
            assert r.G1[i, a] == split.plus[i, a + 1] + F[i, a] * d[0] - sum(
                eps[b] * F[i, b] * F[a, b] for b in range(3))


def test_ricci_vanishing_matches_residual_on_families(rng):
    for fid in atlas.FAMILY_IDS:
        sc = atlas.generate_family(fid, atlas.sample_params(fid, rng))
        assert ricci_closed_form(sc.dorfman(), sc.twist, sc.delta).norm() == 0, fid


def test_invalid_F_is_rejected():
    # unimodular algebras make every 2-form closed, so use [v1, v2] = v2
    alg = algebra_from_brackets((1, 1, 1), {(1, 2): [0, 1, 0]})
    assert einstein_residual(_scene(alg, 0, 1, 0, 0, [0] * 7)) is not None
    with pytest.raises(InvalidSceneError, match="F is not closed"):
        _scene(alg, 0, 0, 0, 1, [0] * 7)


def test_mixed_backends_rejected():
    alg = bracket_from_L(L1(1, 1, 1), (1, 1, 1))
    with pytest.raises(InvalidSceneError, match="backends"):
        Scene(alg, TwistingData.three(0, exact=True), DivergenceOperator(np.zeros(7)))


def test_negative_tolerance():
    alg = algebra_from_brackets((1, 1, 1), {})
    with pytest.raises(ValueError):
        is_einstein(_scene(alg, 0, 0, 0, 0, [0] * 7), tol=-1)


def test_float_tolerance_boundary():
    alg = bracket_from_L(L1(2, 1, 2), (1, 1, 1)).to_float()
    sc = _scene(alg, -1.0, 0.0, 1.0 + 1e-13, 0.0, [0.0] * 7, exact=False)
    assert is_einstein(sc)
    assert not is_einstein(sc, tol=0.0)


def test_residual_rows_order():
    alg = algebra_from_brackets((1, 1, 1), {})
    rows = list(einstein_residual(_scene(alg, 0, 0, 0, 0, [0] * 7)).rows())
    assert len(rows) == 9 + 3 + 3 + 9
    assert rows[0][:3] == ("G1", 4, 1)
    assert rows[9][:3] == ("G2", 4, 0)
    assert rows[12][:3] == ("G3", 4, 0)
    assert rows[-1][:3] == ("G4", 6, 3)
    assert all(v == Fraction(0) for *_, v in rows)


@pytest.mark.parametrize("fid", ["DIAG", "L5", "L3_1", "ND_7ii", "DEG_1"])
def test_scaled_integer_path_matches_general_path(fid, rng, monkeypatch):
    from oddgen import einstein
    for _ in range(5):
        sc = atlas.generate_family(fid, atlas.sample_params(fid, rng), True)
        sc = sc.with_delta(sc.delta.delta + np.array([Fraction(k, 3) for k in range(7)], dtype=object))
        fast = einstein_residual(sc)
        monkeypatch.setattr(einstein, "_INT_LIMIT", -1)
        slow = einstein_residual(sc)
        monkeypatch.undo()
        for g in GROUPS:
            assert list(getattr(fast, g).flat) == list(getattr(slow, g).flat)
