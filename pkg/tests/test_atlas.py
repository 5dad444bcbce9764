from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from oracles import eigen_label
from oddgen import atlas
from oddgen.atlas import FamilyConstraintError, LieLabel, identify, membership
from oddgen.canon import L2, L5, bracket_from_L, bracket_nonunimodular, nonunimodular_params
from oddgen.connection import DivergenceOperator
from oddgen.dorfman import TwistingData, algebra_from_brackets
from oddgen.einstein import Scene, einstein_residual
from oddgen.numeric import asarray


def test_twenty_one_families():
    assert len(atlas.FAMILY_IDS) == 21
    assert atlas.FAMILY_IDS[0] == "DIAG" and atlas.FAMILY_IDS[-1] == "ND_7ii"


def test_unknown_family():
    with pytest.raises(KeyError, match="unknown family"):
        atlas.get_family("L2")


@pytest.mark.parametrize("fid", atlas.FAMILY_IDS)
@pytest.mark.parametrize("exact", [True, False])
def test_generated_scenes_are_einstein_and_members(fid, exact):
    rng = np.random.default_rng(hash(fid) % 2**32)
    for _ in range(4):
        params = atlas.sample_params(fid, rng)
        sc = atlas.generate_family(fid, params, exact)
        norm = einstein_residual(sc).norm
        assert norm == 0 if exact else norm <= 1e-10
        m = membership(sc, fid)
        assert m.member, m.reason
        again = atlas.generate_family(fid, {k: v for k, v in m.params.items()}, exact)
        assert einstein_residual(again).norm == 0 if exact else True


def test_diag_example():
    sc = atlas.generate_family("DIAG", {"eps": (1, 1, 1), "a1": 2, "a2": 1})
    assert sc.twist.H[0, 1, 2] == -1 and sc.twist.F[0, 2] == 1
    assert all(v == 0 for v in sc.delta.delta)
    assert einstein_residual(sc).norm == 0


def test_perturbed_diag_not_member():
    sc = atlas.generate_family("DIAG", {"eps": (1, 1, 1), "a1": 2, "a2": 1})
    F = sc.twist.F.copy()
    F[0, 2], F[2, 0] = Fraction(2), Fraction(-2)
    bad = sc.with_twist(TwistingData(sc.twist.H, F))
    m = membership(bad, "DIAG")
    assert not m and m.reason
    assert atlas.find_families(bad) == []


def test_l2_scene_in_no_family(rng):
    for _ in range(5):
        alg = bracket_from_L(L2(Fraction(1), Fraction(2), Fraction(-1, 2)), (1, 1, -1))
        d = [Fraction(int(v), 2) for v in rng.integers(-4, 5, 7)]
        sc = Scene(alg, TwistingData.three(Fraction(1), 0, 0, Fraction(3)), DivergenceOperator(asarray(d, True)))
        assert einstein_residual(sc).norm != 0
        assert atlas.find_families(sc) == []


def test_deg2_special_branch_constraints():
    p = {"eps": (-1, -1, 1), "lam": 2, "mu": 1, "nu": 4, "rho": 2, "s": 1, "d1": 3, "d4": -1}
    c = atlas.family_coordinates("DEG_2", p)
    lam, nu, rho = 2, 4, 2
    assert c["d3"] == -c["d2"] == lam + rho + Fraction(lam, nu) * c["d1"]
    assert einstein_residual(atlas.generate_family("DEG_2", p)).norm == 0


def test_constraint_messages():
    with pytest.raises(FamilyConstraintError, match=r"eps2\*a2\*\(a1 - a2\) > 0"):
        atlas.generate_family("DIAG", {"eps": (1, 1, 1), "a1": 1, "a2": 1})
    with pytest.raises(FamilyConstraintError, match="a3 = 3 but the family forces 2"):
        atlas.generate_family("DIAG", {"eps": (1, 1, 1), "a1": 2, "a2": 1, "a3": 3})
    with pytest.raises(FamilyConstraintError, match="missing parameter eps"):
        atlas.generate_family("L5", {"F12": 1})
    with pytest.raises(FamilyConstraintError, match="alpha = 1 but the family forces 0"):
        atlas.generate_family("L5", {"eps": (1, 1, -1), "F12": 1, "alpha": 1})
    with pytest.raises(FamilyConstraintError, match="eps1 = eps2 = -eps3"):
        atlas.generate_family("L5", {"eps": (1, 1, 1), "F12": 1})
    with pytest.raises(FamilyConstraintError, match="lambda \\+ rho != 0"):
        atlas.generate_family("DEG_F0", {"eps": (1, 1, -1), "lam": 1, "mu": 0, "rho": -1})


def test_identify_examples():
    assert identify(algebra_from_brackets((1, 1, 1), {})) == atlas.ABELIAN
    assert str(identify(bracket_from_L(atlas.L1(1, 1, 1), (1, 1, 1)))) == "so(3)"
    assert str(identify(bracket_from_L(L5(1), (1, 1, -1)))) == "so(2,1)"
    assert str(identify(bracket_from_L(L5(0), (1, 1, -1)))) == "e(1,1)"
    heis = algebra_from_brackets((1, 1, 1), {(1, 2): [0, 0, 1]})
    assert str(identify(heis)) == "heis"
    e2 = algebra_from_brackets((1, 1, 1), {(1, 2): [0, 0, 1], (1, 3): [0, -1, 0]})
    assert str(identify(e2)) == "e(2)"
    assert str(identify(e2.to_float())) == "e(2)"


def test_identify_nonunimodular_examples():
    p = nonunimodular_params("degenerate", 2, 1, 4, 2, (1, 1, -1))  # lambda rho = mu nu
    assert str(identify(bracket_nonunimodular(p))) == "tau2+R"
    t3 = algebra_from_brackets((1, 1, 1), {(3, 1): [1, 0, 0], (3, 2): [1, 1, 0]})
    assert str(identify(t3)) == "tau3"
    spiral = algebra_from_brackets((1, 1, 1), {(3, 1): [1, 1, 0], (3, 2): [-1, 1, 0]})
    assert identify(spiral) == LieLabel("tau3'", Fraction(1))
    ratio = algebra_from_brackets((1, 1, 1), {(3, 1): [2, 0, 0], (3, 2): [0, -1, 0]})
    assert identify(ratio) == LieLabel("tau3", Fraction(-1, 2))


def test_nd1b_and_nd7ii_labels(rng):
    for fid in ("ND_1b", "ND_7ii"):
        for _ in range(5):
            sc = atlas.generate_family(fid, atlas.sample_params(fid, rng))
            assert identify(sc.alg) == LieLabel("tau3", Fraction(1, 2))


def test_nd7ii_root_ratio(rng):
    # roots (3e +- 1)(mu - nu)/4 of the characteristic polynomial have ratio 1/2
    for _ in range(5):
        sc = atlas.generate_family("ND_7ii", atlas.sample_params("ND_7ii", rng))
        a, b = sorted(np.real(eigen_label(sc.alg.to_float())), key=abs)
        assert a / b == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("fid", [f for f in atlas.FAMILY_IDS if atlas.get_family(f).kind in ("deg", "nondeg")])
def test_labels_agree_with_eigenvalue_oracle(fid):
    rng = np.random.default_rng(7)
    for _ in range(5):
        sc = atlas.generate_family(fid, atlas.sample_params(fid, rng))
        lab = identify(sc.alg)
        ev = eigen_label(sc.alg.to_float())
        if lab.name == "tau2+R":
            assert min(abs(ev)) < 1e-9
        elif lab.name == "tau3" and lab.param is not None:
            a, b = sorted(ev, key=abs)
            assert float(lab.param) == pytest.approx(float(np.real(a / b)), abs=1e-9)


def test_diag_divergence_dichotomy(rng):
    seen_branch = set()
    for _ in range(60):
        p = atlas.sample_params("DIAG", rng)
        c = atlas.family_coordinates("DIAG", p)
        d0, d2 = c["d0"], c["d2"]
        e2, a1, a2 = c["eps"][1], c["a1"], c["a2"]
        if d0 != 0:
            assert (d2 / d0) ** 2 == e2 * (a1 - a2) / a2
            seen_branch.add("nonzero")
        else:
            assert d2 == 0
            seen_branch.add("zero")
    assert seen_branch == {"zero", "nonzero"}


def test_deg2_divergence_nonzero(rng):
    for _ in range(40):
        sc = atlas.generate_family("DEG_2", atlas.sample_params("DEG_2", rng))
        assert any(v != 0 for v in sc.delta.delta)


def test_permutation_choice_is_immaterial(rng):
    perms = [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]
    for _ in range(6):
        sc = atlas.generate_family("DIAG", atlas.sample_params("DIAG", rng))
        for perm in perms:
            q = atlas.permute_scene(sc, perm)
            assert membership(q, "DIAG")
            assert membership(q, "DIAG", orientation_preserving_only=True)
