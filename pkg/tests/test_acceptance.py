"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import itertools
import os
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import random_scene  # noqa: E402
from oddgen import atlas  # noqa: E402
from oddgen.atlas import expected_label, identify, label_matches  # noqa: E402
from oddgen.canon import (ce_differential, closed_two_form, constraint_form,  # noqa: E402
                          gauge_reduce, random_algebra, random_form)
from oddgen.connection import (DivergenceOperator, alt_increment, divergence_of,  # noqa: E402
                               levi_civita, torsion)
from oddgen.curvature import (curvature_tensor, ricci_closed_form, ricci_from_curvature,  # noqa: E402
                              ricci_split_EH)
from oddgen.dorfman import MetricLieAlgebra  # noqa: E402
from oddgen.einstein import einstein_residual  # noqa: E402
from oddgen.frame import build_frame  # noqa: E402
from oddgen.numeric import max_abs, zeros  # noqa: E402
from oddgen.solver import Ansatz, pinned, solve  # noqa: E402

import test_tables as tables  # noqa: E402


def _report(n: int, ok: bool, detail: str) -> str:
    return f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


# --- 1. family verification ----------------------------------------------------

def criterion_1(samples: int = 100):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    bad, worst = [], 0.0
    for fid in atlas.FAMILY_IDS:
        for _ in range(samples):
            p = atlas.sample_params(fid, rng)
            if einstein_residual(atlas.generate_family(fid, p, True)).norm != 0:
                bad.append(fid)
            worst = max(worst, float(einstein_residual(atlas.generate_family(fid, p, False)).norm))
    dt = time.perf_counter() - t0
    ok = not bad and worst <= 1e-10 and dt < 10
    return ok, (f"{len(atlas.FAMILY_IDS)} families x {samples}: exact failures {len(set(bad))}, "
                f"float max {worst:.1e}, {dt:.1f}s")


# --- 2. oracle equivalence -----------------------------------------------------

def criterion_2(scenes: int = 500, decomp: int = 200):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(scenes):
        sc = random_scene(rng, False)
        B = sc.dorfman()
        closed = ricci_closed_form(B, sc.twist, sc.delta)
        brute = ricci_from_curvature(curvature_tensor(levi_civita(B, sc.delta), B))
        for x, y in ((closed.plus, brute.plus), (closed.minus, brute.minus)):
            scale = max(1.0, float(np.max(np.abs(y))))
            worst = max(worst, float(np.max(np.abs(x - y))) / scale)
    failures = 0
    for _ in range(decomp):
        sc = random_scene(rng, True)
        B = sc.dorfman()
        F, d, eps = sc.twist.F, sc.delta.delta, sc.alg.epsilon
        full = ricci_closed_form(B, sc.twist, sc.delta)
        split = ricci_split_EH(B, d)
        for i, a in itertools.product(range(3), range(1, 4)):
            want = F[i, a - 1] * d[0] - sum(eps[b] * F[i, b] * F[a - 1, b] for b in range(3))
            failures += full.plus[i, a] - split.plus[i, a] != want
    ok = worst <= 1e-10 and failures == 0
    return ok, f"{scenes} scenes, max relative gap {worst:.1e}; decomposition failures {failures}/{decomp}"


# --- 3. connection suite and tables -----------------------------------------------

def _sym_sigma(rng, side):
    idx = list(range(4)) if side == "+" else list(range(4, 7))
    s = np.zeros((7, 7, 7))
    sub = rng.normal(size=(len(idx),) * 3)
    s[np.ix_(idx, idx, idx)] = sub + sub.transpose(1, 0, 2)
    return s


def _table_failures(rng, per: int):
    bad = 0
    R, sg = tables.rand, tables._sign
    for _ in range(per):
        a1, a2, a3, h = R(rng, 4)
        eps = (sg(rng), sg(rng), sg(rng))
        d = [0] + R(rng, 6)
        bad += bool(tables.compare(tables.bracket_from_L(tables.L1(a1, a2, a3), eps), h, d,
                                   *tables.diag_tables(a1, a2, a3, h, eps, d)))
        al, be, ga, h = R(rng, 4)
        be = be or Fraction(1)
        e1 = sg(rng)
        bad += bool(tables.compare(tables.bracket_from_L(tables.L2(al, be, ga), (e1, e1, -e1)), h, d,
                                   *tables.l2_tables(al, be, ga, h, e1, d)))
        for eta in (1, -1):
            al, be, h = R(rng, 3)
            bad += bool(tables.compare(tables.bracket_from_L(tables.L3(eta, al, be), (e1, e1, -e1)), h, d,
                                       *tables.l3_tables(eta, al, be, h, e1, d)))
        al, h = R(rng, 2)
        bad += bool(tables.compare(tables.bracket_from_L(tables.L5(al), (e1, e1, -e1)), h, d,
                                   *tables.l5_tables(al, h, e1, d)))
        lam, mu, nu, rho, h = R(rng, 5)
        if lam + rho == 0:
            rho += 1
        alg = tables.bracket_nonunimodular(tables.nonunimodular_params("degenerate", lam, mu, nu, rho, (e1, e1, -e1)))
        bad += bool(tables.compare(alg, h, d, *tables.deg_tables(lam, mu, nu, rho, h, e1, d)))
        lam, mu, nu, rho, h = R(rng, 5)
        if eps[0] * lam + eps[2] * rho == 0:
            lam += 1
        alg = tables.bracket_nonunimodular(tables.nonunimodular_params("nondegenerate", lam, mu, nu, rho, eps))
        bad += bool(tables.compare(alg, h, d, *tables.nondeg_tables(lam, mu, nu, rho, h, eps, d)))
    return bad


def criterion_3(pairs: int = 200, per_table: int = 20):
    rng = np.random.default_rng(303)
    lc_bad = inv_gap = 0
    for k in range(pairs):
        sc = random_scene(rng, True)
        B = sc.dorfman()
        D = levi_civita(B, sc.delta)
        if (max_abs(torsion(D, B)) != 0 or D.metric_defect() != 0 or not D.preserves_minus()
                or list(divergence_of(D).delta) != list(sc.delta.delta)):
            lc_bad += 1
        fs = sc.to_float()
        Bf = fs.dorfman()
        side = "+-"[k % 2]
        inc = alt_increment(_sym_sigma(rng, side), side, Bf.frame)
        lam = divergence_of(inc).delta
        D1 = levi_civita(Bf, fs.delta)
        D2 = levi_civita(Bf, DivergenceOperator(fs.delta.delta - lam)) + inc
        r1 = ricci_from_curvature(curvature_tensor(D1, Bf))
        r2 = ricci_from_curvature(curvature_tensor(D2, Bf))
        inv_gap = max(inv_gap, float(np.max(np.abs(r1.plus - r2.plus))), float(np.max(np.abs(r1.minus - r2.minus))))
    tbad = _table_failures(rng, per_table)
    ok = lc_bad == 0 and inv_gap < 1e-10 and tbad == 0
    return ok, (f"{pairs} pairs: Levi-Civita failures {lc_bad}, increment invariance gap {inv_gap:.1e}; "
                f"table mismatches {tbad}/{7 * per_table}")


# --- 4. non-existence evidence -------------------------------------------------

def _diag_case_algebras(rng, case: str, count: int):
    """(a1, a2, a3, h) with none / exactly two / all three of the a_c equal to -h."""
    out = []
    while len(out) < count:
        h = float(rng.uniform(-3, 3))
        a = rng.uniform(-3, 3, 3)
        if case == "III":
            a[rng.permutation(3)[:2]] = -h
        elif case == "IV":
            a[:] = -h
        if case == "I" and np.min(np.abs(a + h)) < 0.1:
            continue
        if case == "III" and np.sum(np.abs(a + h) < 1e-12) != 2:
            continue
        out.append(dict(a1=a[0], a2=a[1], a3=a[2], h=h))
    return out


def criterion_4(l2_algebras: int = 200, l2_starts: int = 50, diag_algebras: int = 12, diag_starts: int = 100):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    an = Ansatz.make("l2", (1, 1, -1))
    algs = []
    while len(algs) < l2_algebras:
        a, b, g = rng.uniform(-3, 3, 3)
        if abs(b) > 0.1:
            algs.append(dict(alpha=a, beta=b, gamma=g))
    rep = solve(an, l2_algebras * l2_starts, 4, tol=1e-8, pin=pinned(an, algs, l2_starts), match=False)
    l2_roots = len(rep.roots)
    diag_roots = {}
    for case in ("I", "III", "IV"):
        found = 0
        for eps in ((1, 1, 1), (1, -1, 1), (-1, 1, 1)):
            an = Ansatz.make("l1", eps)
            cs = _diag_case_algebras(rng, case, diag_algebras)
            rep = solve(an, len(cs) * diag_starts, 5, tol=1e-8, pin=pinned(an, cs, diag_starts), match=False)
            found += len(rep.roots)
        diag_roots[case] = found
    dt = time.perf_counter() - t0
    ok = l2_roots == 0 and not any(diag_roots.values())
    per_case = 3 * diag_algebras
    return ok, (f"L2 {l2_algebras}x{l2_starts}: {l2_roots} roots; diag cases I/III/IV "
                f"({per_case} algebras x {diag_starts} starts each): "
                f"{diag_roots['I']}/{diag_roots['III']}/{diag_roots['IV']} roots; {dt:.0f}s")


# --- 5. Lie identification -------------------------------------------------------

def criterion_5(samples: int = 20):
    rng = np.random.default_rng(505)
    bad = []
    for fid in atlas.FAMILY_IDS:
        for _ in range(samples):
            p = atlas.sample_params(fid, rng)
            sc = atlas.generate_family(fid, p)
            if not label_matches(identify(sc.alg), expected_label(fid, p)):
                bad.append(fid)
    return not bad, f"{len(atlas.FAMILY_IDS)} families x {samples}: mismatches {len(bad)} {sorted(set(bad))}"


# --- 6. solver rediscovery -----------------------------------------------------

REDISCOVERY = (("l1", (1, 1, 1), 1), ("l1", (1, -1, 1), 1), ("l3", (1, 1, -1), 1), ("l3", (-1, -1, 1), -1),
               ("l5", (1, 1, -1), 1), ("l5", (-1, -1, 1), 1), ("deg", (-1, -1, 1), 1),
               ("nondeg", (-1, 1, 1), 1), ("nondeg", (1, -1, -1), 1))


def criterion_6(starts: int = 1000):
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind, eps, eta in REDISCOVERY:
        rep = solve(Ansatz.make(kind, eps, eta=eta), starts, 11)
        frac = rep.matched_fraction
        ok &= bool(rep.roots) and frac >= 0.9
        parts.append(f"{kind}{eps}:{frac:.3f}")
    a = Ansatz.make("nondeg", (-1, 1, 1))
    same = solve(a, 50, 3).to_dict() == solve(a, 50, 3).to_dict()
    ok &= same
    dt = time.perf_counter() - t0
    return ok, f"matched fractions {' '.join(parts)}; deterministic {same}; {dt:.0f}s"


# --- 7. structural invariants --------------------------------------------------

def _four_dim(rng, exact):
    g = random_algebra(rng, exact)
    frame, _ = build_frame(4, tuple(g.epsilon) + (int(rng.choice([1, -1])),))
    k = zeros((4, 4, 4), exact)
    k[:3, :3, :3] = g.k
    return MetricLieAlgebra(frame, k)


def criterion_7(cases: int = 1000):
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    fails = dict(jacobi=0, skew=0, d2=0, gauge=0, eta2=0)
    for k in range(cases):
        exact = k % 4 == 0
        alg = random_algebra(rng, exact)
        fails["jacobi"] += not alg.satisfies_jacobi()
        sc = random_scene(rng, exact)
        B = sc.dorfman().B
        for axes in ((1, 0, 2), (0, 2, 1)):
            fails["skew"] += max_abs(B + B.transpose(axes)) > (0 if exact else 1e-12)
        g4 = _four_dim(rng, exact)
        tol = 0 if exact else 1e-10
        one, two = random_form(rng, 4, 1, exact), random_form(rng, 4, 2, exact)
        fails["d2"] += (max_abs(ce_differential(ce_differential(one, g4), g4)) > tol
                        or max_abs(ce_differential(ce_differential(two, g4), g4)) > tol)
        H, F = random_form(rng, 4, 3, exact), closed_two_form(rng, g4, exact)
        b, A = random_form(rng, 4, 2, exact), random_form(rng, 4, 1, exact)
        Ht, Ft = gauge_reduce(None, b, A, H, F, g4)
        fails["gauge"] += (max_abs(constraint_form(Ht, Ft, g4) - constraint_form(H, F, g4)) > tol
                           or max_abs(ce_differential(Ft, g4)) > tol)
        n = int(rng.integers(2, 7))
        _, eta = build_frame(n, [int(v) for v in rng.choice([1, -1], n)])
        fails["eta2"] += not np.array_equal(eta.eta @ eta.eta, np.eye(2 * n + 1))
    dt = time.perf_counter() - t0
    ok = not any(fails.values()) and dt < 30
    return ok, f"{cases} cases each, failures {fails}, {dt:.1f}s"


# --- pytest entry points ---------------------------------------------------------

CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n]()
    with capsys.disabled():
        print("\n" + _report(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        print(_report(n, ok, detail), flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
