"""Constant estimators against direct recomputation.

Table entries are recomputed one by one with the functionals, witnesses are
re-evaluated from scratch, and the closed-form democracy values of the mixed
model come from counting spine and off-spine positions by hand.
"""
import itertools
import math

import numpy as np
import pytest

from greedylab import functionals as fn
from greedylab.constants import (CapExceeded, SampleFamily, constants_report,
                                 estimate_democracy, estimate_quasi_greedy, estimate_ratio_constant,
                                 estimate_unconditionality, mask_tables, partial_democracy_witness,
                                 ratio_tables)
from greedylab.spaces import IntervalSummingNorm, LpNorm, MixedNorm, SummingNorm, WeightedNorm, spine_upto
from greedylab.tga import greedy_sets, is_greedy_set, project, project_out

L1, L2, LHALF = LpNorm(1), LpNorm(2), LpNorm(0.5)
MIXED = MixedNorm(1, 2)


def test_family_reproducible_and_sliceable():
    fam = SampleFamily(7, count=50, seed=3)
    X = fam.vectors()
    assert X.shape == (52, 7)
    assert np.array_equal(X[:2], [[1, 0, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0, 0]])
    for lo, hi in ((0, 5), (1, 30), (17, 52), (40, 99)):
        assert np.array_equal(fam.vectors(lo, hi), X[lo:hi])
    assert np.array_equal(SampleFamily(7, count=50, seed=3).vectors(), X)
    assert not np.array_equal(SampleFamily(7, count=50, seed=4).vectors(), X)
    # sample i is keyed on (seed, i) alone, so longer families extend shorter ones
    assert np.array_equal(SampleFamily(7, count=80, seed=3).vectors(0, 52), X)


def test_grid_family_enumerates_everything():
    fam = SampleFamily(3, kind="grid", grid=(-1.0, 0.0, 1.0), include_basic=False)
    X = fam.vectors()
    assert len(fam) == 27
    assert {tuple(r) for r in X} == set(itertools.product((-1.0, 0.0, 1.0), repeat=3))


def test_family_errors():
    with pytest.raises(ValueError):
        SampleFamily(0)
    with pytest.raises(ValueError):
        SampleFamily(3, kind="nosuch")
    with pytest.raises(CapExceeded):
        SampleFamily(9, kind="grid")
    with pytest.raises(CapExceeded):
        mask_tables(15)


def test_mask_tables_order():
    sets, M, sizes, comp, intervals, prefix = mask_tables(3)
    assert sets == [(), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)]
    assert [sets[c] for c in comp] == [(1, 2, 3), (2, 3), (1, 3), (1, 2), (3,), (2,), (1,), ()]
    assert [sorted(sets[i] for i in iv) for iv in intervals] == [
        [()], [(), (1,), (2,), (3,)], [(), (1, 2), (2, 3), (3,)], [(), (1, 2, 3), (2, 3), (3,)]]
    assert [sets[i] for i in prefix] == [(), (1,), (1, 2), (1, 2, 3)]


@pytest.mark.parametrize("norm", [L1, LHALF, MIXED, SummingNorm(), IntervalSummingNorm()], ids=str)
def test_ratio_tables_match_functionals(norm):
    X = SampleFamily(5, count=12, seed=1).vectors()
    T = ratio_tables(norm, X)
    for v, x in enumerate(X):
        for j, A in enumerate(T["sets"]):
            assert T["R"][v, j] == pytest.approx(norm(project_out(x, A)), rel=1e-12, abs=1e-14)
            assert T["greedy"][v, j] == is_greedy_set(x, A)
        for m in range(6):
            for name, f in (("tilde", fn.sigma_tilde), ("check", fn.sigma_check),
                            ("prefix_tail", fn.best_prefix_tail), ("hathat", fn.sigma_hathat)):
                assert T[name][v, m] == pytest.approx(f(x, m, norm).value, rel=1e-9, abs=1e-12), (name, m)
            assert T["partial_sum"][v, m] == pytest.approx(norm(project_out(x, range(1, m + 1))), rel=1e-12)


def test_ratio_ordering_per_sample():
    # benchmark ordering tilde <= check <= partial sum gives the reverse ordering of ratios
    for norm in (L1, L2, LHALF, MIXED, SummingNorm()):
        T = ratio_tables(norm, SampleFamily(6, count=60, seed=2).vectors(), ("tilde", "check", "partial_sum"))
        sizes = T["sizes"]
        ok = T["greedy"] & (sizes >= 1)[None, :]
        til, chk, ps = (T[k][:, sizes] for k in ("tilde", "check", "partial_sum"))
        assert np.all(til[ok] <= chk[ok] * (1 + 1e-12) + 1e-15)
        assert np.all(chk[ok] <= ps[ok] * (1 + 1e-12) + 1e-15)


def _witness_ratio(norm, wit, bench):
    x = np.array(wit["x"])
    num = norm(project_out(x, wit["A"]))
    den = {"tilde": fn.sigma_tilde, "check": fn.sigma_check, "partial_sum": None,
           "prefix_tail": fn.best_prefix_tail, "hathat": fn.sigma_hathat}[bench]
    d = norm(project_out(x, range(1, wit["m"] + 1))) if den is None else den(x, wit["m"], norm).value
    assert is_greedy_set(x, wit["A"])
    return num / d


@pytest.mark.parametrize("norm", [L2, LHALF, MIXED, SummingNorm()], ids=str)
@pytest.mark.parametrize("bench", ["tilde", "check", "partial_sum", "prefix_tail", "hathat"])
def test_ratio_witness_reevaluates(norm, bench):
    fam = SampleFamily(5, count=40, seed=5)
    est = estimate_ratio_constant(norm, fam, bench)
    assert est.value >= 1 - 1e-9
    assert _witness_ratio(norm, est.witness, bench) == pytest.approx(est.value, rel=1e-9)


def test_ratio_constant_aliases_and_errors():
    fam = SampleFamily(3, count=5)
    assert estimate_ratio_constant(L1, fam, "S_m").name == "partial_sum"
    with pytest.raises(ValueError):
        estimate_ratio_constant(L1, fam, "nosuch")


def test_l1_exhaustive_constants_equal_one():
    fam = SampleFamily(4, kind="grid")
    rep = constants_report(L1, fam)
    for name, est in rep.estimates.items():
        assert est.value == pytest.approx(1.0, abs=1e-9), name


def test_basis_normalization_fields():
    rep = constants_report(WeightedNorm((1.0, 3.0, 0.5), 1), SampleFamily(3, count=5))
    assert rep.estimates["norm_e_min"].value == 0.5 and rep.estimates["norm_e_min"].witness == {"n": 3}
    assert rep.estimates["norm_e_max"].value == 3.0 and rep.estimates["norm_e_max"].witness == {"n": 2}


def test_lp_permutation_closed_family():
    # reordering equivalence: on permutation-closed grids C_ca equals C_a for lp
    for norm in (L2, LHALF):
        fam = SampleFamily(4, kind="grid", grid=(-1.0, -0.5, 0.0, 0.5, 1.0, 2.0))
        a = estimate_ratio_constant(norm, fam, "tilde").value
        ca = estimate_ratio_constant(norm, fam, "check").value
        assert ca == pytest.approx(a, abs=1e-9)


def test_l2_quasi_greedy_and_democratic_forces_almost_greedy():
    fam = SampleFamily(4, kind="grid")
    cq, cl = estimate_quasi_greedy(L2, fam)
    delta = estimate_democracy(L2, 4, "plain", 8)
    assert cq.value == pytest.approx(1) and cl.value == pytest.approx(1) and delta.value == pytest.approx(1)
    assert estimate_ratio_constant(L2, fam, "tilde").value == pytest.approx(1, abs=1e-9)


def test_quasi_greedy_witness_and_suppression_note():
    fam = SampleFamily(5, count=80, seed=2)
    cq, cl = estimate_quasi_greedy(SummingNorm(), fam)
    x = np.array(cq.witness["x"])
    assert SummingNorm()(project(x, cq.witness["A"])) / SummingNorm()(x) == pytest.approx(cq.value)
    assert cq.value > 1
    assert cl.note.startswith("m = 0 included; sup over m >= 1 is ")
    assert cl.value >= 1
    with pytest.raises(ValueError):
        estimate_quasi_greedy(L1, SampleFamily(2, count=0, include_basic=False))


@pytest.mark.parametrize("norm", [L1, L2, LHALF], ids=str)
@pytest.mark.parametrize("flavor", ["plain", "super", "disjoint", "disjoint_super", "conservative"])
def test_lp_democracy_is_one(norm, flavor):
    assert estimate_democracy(norm, 3, flavor, 6).value == pytest.approx(1.0, rel=1e-12)


def test_mixed_democracy_spine_against_off_spine():
    spine = spine_upto(1, 2, 64)
    off = [k for k in range(1, 65) if k not in spine][:4]
    one = np.zeros(64)
    one[[s - 1 for s in spine]] = 1
    two = np.zeros(64)
    two[[k - 1 for k in off]] = 1
    assert MIXED(one) / MIXED(two) == 2.0
    est = estimate_democracy(MIXED, 4, "plain", tuple(spine) + tuple(off))
    # by hand: ||1_B|| over |B| = 4 is smallest at one spine point plus three off it, max(1, sqrt 3)
    assert est.value == pytest.approx(4 / math.sqrt(3), rel=1e-12)
    w = est.witness
    assert w["numerator"] == 4 and w["A"] == list(spine)


def test_democracy_singletons_and_errors():
    for norm in (MIXED, SummingNorm(), IntervalSummingNorm()):
        assert estimate_democracy(norm, 1, "plain", 5).value == 1
    with pytest.raises(ValueError):
        estimate_democracy(L1, 0)
    with pytest.raises(ValueError):
        estimate_democracy(L1, 3, "disjoint", 5)
    with pytest.raises(ValueError):
        estimate_democracy(L1, 2, "nosuch")


def test_super_democracy_detects_signs():
    # summing norm: ||1_A|| = |A| for positive signs, the alternating pair has norm 1
    assert estimate_democracy(SummingNorm(), 2, "plain", 4).value == 1
    assert estimate_democracy(SummingNorm(), 2, "super", 4).value == 2
    assert estimate_democracy(SummingNorm(), 2, "disjoint_super", 4).value == 2


def offspine_oracle(d, n, bound, spine):
    """min ||1_B|| over B inside {d+1..bound}, |B| = n, by counting spine points."""
    s_av = sum(1 for s in spine if d < s <= bound)
    o_av = bound - d - s_av
    return min(max(j, math.sqrt(n - j)) if j < n else n
               for j in range(0, n + 1) if j <= s_av and n - j <= o_av)


def test_partial_democracy_mixed():
    w = partial_democracy_witness(MIXED, 4, 64)
    assert w is not None and not w.inconclusive
    spine = spine_upto(1, 2, 64)
    assert w.A == spine
    assert [r["D"] for r in w.rows] == [[1, d] for d in range(47, 61)]
    for r in w.rows:
        d = r["D"][1]
        assert r["ratio"] == pytest.approx(4 / offspine_oracle(d, 4, 64, spine), rel=1e-12)
        assert min(r["B"]) > d and len(r["B"]) == 4
    assert w.min_ratio >= 2


def test_partial_democracy_default_set_and_heuristic_pool():
    # A given explicitly, bound large enough that the exhaustive cap forces the heuristic pool
    w = partial_democracy_witness(MIXED, 3, 40, A=(5, 11, 23), exhaustive_cap=10)
    spine = spine_upto(1, 2, 40)
    for r in w.rows:
        assert r["ratio"] == pytest.approx(3 / offspine_oracle(r["D"][1], 3, 40, spine), rel=1e-12)


def test_partial_democracy_trivial_cases():
    assert partial_democracy_witness(L1, 3, 20) is None
    with pytest.raises(ValueError):
        partial_democracy_witness(L1, 0, 20)
    with pytest.raises(ValueError):
        partial_democracy_witness(L1, 2, 20, A=(1,))
    w = partial_democracy_witness(MIXED, 2, 3, A=(1, 2))
    assert w.inconclusive and w.rows == []


@pytest.mark.parametrize("norm", [L1, L2, LHALF, MIXED], ids=str)
def test_unconditionality_lattice_is_one(norm):
    for dim in (3, 7):
        est = estimate_unconditionality(norm, SampleFamily(dim, count=30, seed=1))
        assert est.value == pytest.approx(1.0, rel=1e-12)


def brute_uncond(norm, b):
    """max over every factor pattern from {0, +-1/4, +-1/2, +-1} of ||f b|| / ||b||."""
    levels = (-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0)
    F = np.array(list(itertools.product(levels, repeat=len(b))))
    return (norm.batch(F * b) / norm(b)).max()


def test_unconditionality_small_dim_exhaustive():
    fam = SampleFamily(4, count=20, seed=6)
    est = estimate_unconditionality(SummingNorm(), fam)
    ref = max(brute_uncond(SummingNorm(), b) for b in fam.vectors() if b.any())
    assert est.value == pytest.approx(ref, rel=1e-12)
    b, a = np.array(est.witness["b"]), np.array(est.witness["a"])
    assert np.all(np.abs(a) <= np.abs(b) + 1e-15)
    assert SummingNorm()(a) / SummingNorm()(b) == pytest.approx(est.value)


def test_unconditionality_interval_model_dim16():
    fam = SampleFamily(16, count=2, seed=0)
    est = estimate_unconditionality(IntervalSummingNorm(), fam, max_signs=1 << 12)
    assert est.value > 1
    b, a = np.array(est.witness["b"]), np.array(est.witness["a"])
    assert np.all(np.abs(a) <= np.abs(b) + 1e-15)
    assert IntervalSummingNorm()(a) / IntervalSummingNorm()(b) == pytest.approx(est.value)


def test_worker_count_does_not_change_estimates():
    fam = SampleFamily(6, count=300, seed=11)
    one = constants_report(SummingNorm(), fam, workers=1)
    three = constants_report(SummingNorm(), fam, workers=3)
    assert one.rows() == three.rows()


# ---------------------------------------------------------------------------
# strong partially greedy ratio in the mixed model on growing windows

def prefix_tail_witness(window):
    """x = 1_{[1, s_k]} + 1_B with B the first k off-spine positions past s_k,
    k as large as the window allows, m = s_k.  The greedy set that keeps the
    k spine points leaves ||1_spine|| = k, while the best prefix tail is
    ||1_B|| = sqrt k."""
    spine = spine_upto(1, 2, window)
    best = (1.0, None)
    for k in range(1, len(spine) + 1):
        sk = spine[k - 1]
        B = [j for j in range(sk + 1, window + 1) if j not in spine][:k]
        if len(B) < k:
            break
        x = np.zeros(window)
        x[:sk] = 1
        x[[b - 1 for b in B]] = 1
        A = [j for j in range(1, sk + 1) if j not in spine[:k]] + B
        assert len(A) == sk and is_greedy_set(x, A)
        num = MIXED(project_out(x, A))
        den = fn.best_prefix_tail(x, sk, MIXED).value
        # independent prefix scan
        assert den == min(MIXED(project_out(x, range(1, j + 1))) for j in range(sk + 1))
        best = max(best, (num / den, (k, window)), key=lambda t: t[0])
    return best


def test_mixed_prefix_tail_ratio_grows_with_window():
    vals = [prefix_tail_witness(w)[0] for w in (8, 16, 32, 48, 51, 64)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(2.0, rel=1e-12)
    assert prefix_tail_witness(50)[0] == pytest.approx(math.sqrt(3), rel=1e-12)


def test_mixed_prefix_tail_small_window_engine_agrees():
    # at dim 12 only the k = 1 construction fits, with ratio 1
    x = np.zeros(12)
    x[:5] = 1
    x[5] = 1
    A = [1, 2, 3, 4, 6]
    assert A in [list(s) for s in greedy_sets(x, 5)]
    assert MIXED(project_out(x, A)) / fn.best_prefix_tail(x, 5, MIXED).value == 1.0
    fam = SampleFamily(12, count=20, seed=0)
    est = estimate_ratio_constant(MIXED, fam, "prefix_tail")
    assert est.value >= 1
    assert _witness_ratio(MIXED, est.witness, "prefix_tail") == pytest.approx(est.value, rel=1e-9)

