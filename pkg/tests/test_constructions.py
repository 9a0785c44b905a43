"""Constructions re-checked with hand-written norms and exhaustive searches."""
import itertools
import json
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from greedylab.constructions import (T3Witness, WitnessRejected, assemble_t3, build_e1, build_mixed_instance,
                                     search_t3_witness, verify_intervals_plus_1dim)
from greedylab.spaces import LpNorm, MixedNorm, SummingNorm

S = SummingNorm()


def summing(v):
    """max(sup |x_k|, sup |x_1 + ... + x_k|), written out independently."""
    v = np.asarray(v, dtype=float)
    return max(np.abs(v).max(initial=0.0), np.abs(np.cumsum(v)).max(initial=0.0))


def l1(v):
    return float(np.abs(np.asarray(v, dtype=float)).sum())


def greedy_brute(x, B):
    mod = np.abs(x)
    inside = [mod[b - 1] for b in B]
    outside = [mod[k] for k in range(len(x)) if k + 1 not in set(B)]
    return not inside or not outside or min(inside) >= max(outside)


# ---------------------------------------------------------------------------
# E1

@pytest.mark.parametrize("C", [1.5, 2, 4, 8, 16, 100])
def test_e1_brute_force(C):
    e = build_e1(C)
    x, m, n = e.x, e.m, len(e.x)
    assert e.a == (C + 1) / (m - 1)
    assert [i for i in range(1, n + 1) if x[i - 1] == e.a] == list(e.a_positions)
    tilde = min(l1(np.where(np.isin(np.arange(1, n + 1), A), 0, x))
                for A in itertools.combinations(range(1, n + 1), m))
    check = min(l1(np.concatenate([x[:a], x[a + m:]])) for a in range(n - m + 1))
    assert tilde == pytest.approx(1.0, abs=1e-12)
    assert check > C
    assert check >= (m - 1) * e.a


def test_e1_general_m():
    e = build_e1(5, m=4)
    assert len(e.x) == 20 and e.a == 2.0
    with pytest.raises(ValueError):
        build_e1(1.0)
    with pytest.raises(ValueError):
        build_e1(3, m=1)


# ---------------------------------------------------------------------------
# mixed instance

def test_mixed_instance_report():
    inst = build_mixed_instance(1, 2, 64, n=4, interval_samples=300, C=4, seed=1)
    rep = inst.report
    assert inst.spine == (5, 11, 23, 47) and rep["spine"] == [5, 11, 23, 47]
    assert rep["spine_conditions"]
    assert rep["unconditionality"] == pytest.approx(1.0, rel=1e-12)
    assert rep["democracy_spine_vs_offspine"] >= 2
    pd = rep["partial_democracy"]
    assert pd["A"] == [5, 11, 23, 47] and pd["min_ratio"] >= 2 and not pd["inconclusive"]
    chk = rep["intervals_plus_1dim"]
    assert chk["passed"] and chk["samples"] == 300 and chk["worst_ratio"] <= 4


def test_mixed_instance_errors_and_other_exponents():
    with pytest.raises(ValueError):
        build_mixed_instance(1, 2, window=10)
    inst = build_mixed_instance(1, 3, 64, n=3)
    assert inst.spine == (9, 28)
    assert "partial_democracy" not in inst.report


def _check_triple(norm, wit, window):
    x, y = np.array(wit["x"]), np.array(wit["y"])
    A, I, m = wit["A"], wit["I"], wit["m"]
    assert len(x) == window and len(A) == m and len(I) == m
    assert greedy_brute(x, A)
    assert I == list(range(I[0], I[0] + m)) and not set(I) & set(A)
    assert set(np.flatnonzero(y) + 1) <= set(I)
    num = norm(np.where(np.isin(np.arange(1, window + 1), A), 0, x))
    return num / norm(x - y)


def test_intervals_plus_1dim_witness():
    norm = MixedNorm(1, 2)
    chk = verify_intervals_plus_1dim(norm, 64, 400, 4.0, seed=3)
    assert chk.samples == 400 and chk.passed
    assert _check_triple(norm, chk.witness, 64) == pytest.approx(chk.worst_ratio, rel=1e-12)
    again = verify_intervals_plus_1dim(norm, 64, 400, 4.0, seed=3)
    assert again.worst_ratio == chk.worst_ratio and again.witness == chk.witness


def test_intervals_plus_1dim_l1_ratio_at_most_one():
    # in l1: ||x - P_A x|| = |x| off A and I plus |x| on I, bounded by the same plus |x| on A
    chk = verify_intervals_plus_1dim(LpNorm(1), 32, 300, 1.0, seed=0)
    assert chk.passed and chk.worst_ratio <= 1 + 1e-12
    assert _check_triple(LpNorm(1), chk.witness, 32) == pytest.approx(chk.worst_ratio, rel=1e-12)


def test_intervals_plus_1dim_fails_honestly():
    chk = verify_intervals_plus_1dim(MixedNorm(1, 2), 64, 200, 0.5, seed=0)
    assert not chk.passed and chk.worst_ratio > 0.5


# ---------------------------------------------------------------------------
# block witnesses

def test_t3_witness_search_summing():
    for k, length in ((1, 6), (2, 10), (3, 18)):
        w = search_t3_witness(S, k)
        n = 2**k + 1
        assert w.l == length == 2 * n and w.m == n
        assert np.array_equal(w.y, np.tile([1.0, -1.0], n))
        assert w.A == tuple(range(1, 2 * n, 2))
        # residual (0, -1, 0, -1, ...) has partial sums down to -n; y - z keeps partial sums in [0, 1]
        num = summing(np.where(np.isin(np.arange(1, 2 * n + 1), w.A), 0, w.y))
        den = summing(w.y - w.z)
        assert num == n and den == pytest.approx(1.0, abs=1e-12)
        assert num > 2**k * den
        w.validate(S)


def test_t3_witness_search_l1_and_errors():
    assert search_t3_witness(LpNorm(1), 2, budget=20) is None
    with pytest.raises(ValueError):
        search_t3_witness(S, 0)


def test_t3_witness_offset():
    w = search_t3_witness(S, 1, offset=4)
    assert w.offset == 4 and w.A[0] == 5
    assert list(np.flatnonzero(w.y) + 1) == list(range(5, 11))
    w.validate(S)


def _alt(n, offset=0, c=None, scale=1.0):
    y = np.concatenate([np.zeros(offset), scale * np.tile([1.0, -1.0], n)])
    z = np.zeros_like(y)
    z[offset::2] = scale * (1.0 / n if c is None else c)
    return y, tuple(offset + 1 + 2 * j for j in range(n)), z


def test_t3_witness_rejections():
    y, A, z = _alt(5)
    T3Witness(y, 5, A, z, 2).validate(S)
    zz = z.copy()
    zz[0] = 0
    with pytest.raises(WitnessRejected, match="supp"):
        T3Witness(y, 5, A, zz, 2).validate(S)
    with pytest.raises(WitnessRejected, match="gap"):
        T3Witness(y, 5, A, z, 3).validate(S)
    with pytest.raises(WitnessRejected, match="greedy"):
        bad = y.copy()
        bad[1] = -2.0
        T3Witness(bad, 5, A, z, 2).validate(S)
    with pytest.raises(WitnessRejected, match="interval"):
        T3Witness(np.r_[0.0, y], 5, A, np.r_[0.0, z], 2).validate(S)
    with pytest.raises(WitnessRejected, match="1 <= m < l"):
        T3Witness(y, 10, tuple(range(1, 11)), np.ones(10), 2).validate(S)


# ---------------------------------------------------------------------------
# assembly

def hathat_lp(x, order, M):
    """inf over coefficients on the first M slots of ``order`` of the summing norm, as an LP."""
    n = len(x)
    F = np.vstack([np.eye(n), np.tril(np.ones((n, n)))])
    cols = [o - 1 for o in order[:M]]
    G = F[:, cols]
    r = F @ x
    k = len(cols)
    ones = np.ones((F.shape[0], 1))
    A = np.vstack([np.hstack([-ones, -G]), np.hstack([-ones, G])])
    res = linprog(np.r_[1.0, np.zeros(k)], A_ub=A, b_ub=np.r_[-r, r],
                  bounds=[(0, None)] + [(None, None)] * k, method="highs")
    return res.fun


def test_assemble_t3_depth3_independent_recheck():
    asm = assemble_t3(S, 3)
    assert asm.valid and asm.failure is None
    assert asm.s == [0, 6, 16, 34, 68]
    x = asm.x
    assert sorted(asm.pi) == list(range(1, 69))
    assert all(all(b["checks"].values()) for b in asm.blocks)
    for lvl in asm.levels:
        i = lvl["i"]
        assert all(lvl["checks"].values())
        B = asm.B[i + 1]
        assert greedy_brute(x, B)
        resid = summing(np.where(np.isin(np.arange(1, 69), B), 0, x))
        assert resid == pytest.approx(lvl["residual"], rel=1e-12)
        # scale-free LP: divide by the largest coefficient to keep HiGHS tolerances relative
        top = np.abs(x).max()
        hh = top * hathat_lp(x / top, asm.pi, lvl["M"])
        assert hh == pytest.approx(lvl["sigma_hathat"], rel=1e-6)
        if i >= 2:
            assert resid > 2 ** (i - 1) * hh
    assert [round(l["ratio"]) for l in asm.levels] == [5, 9, 17]


def test_assemble_t3_json_round_trip():
    asm = assemble_t3(S, 2)
    data = json.loads(asm.to_json())
    assert data["valid"] and data["s"] == asm.s and data["pi"] == asm.pi
    assert data["x"] == asm.x.tolist()
    assert set(data["B"]) == {"2", "3"}


def test_assemble_t3_synthetic_source():
    def source(k, offset):
        n = 2**k + 1
        y, A, z = _alt(n, offset)
        return T3Witness(y, n, A, z, k, offset)

    asm = assemble_t3(S, 4, source=source)
    assert asm.valid
    assert [b["l"] for b in asm.blocks] == [6, 10, 18, 34, 66]
    assert all(math.log2(abs(v)).is_integer() for v in asm.x)      # power-of-two scaling is exact


@pytest.mark.parametrize("eps", [1e-3, 1e-6])
def test_assemble_t3_gap_barely_above_threshold(eps):
    # z = c 1_A with c = 1/(2^k + eps): partial sums of y - z bottom out at -n c, so the gap is 2^k + eps
    def source(k, offset):
        n = 2**k + 1
        y, A, z = _alt(n, offset, c=1.0 / (2**k + eps))
        w = T3Witness(y, n, A, z, k, offset)
        num, den = w.gap(S)
        assert num / den == pytest.approx(2**k + eps, rel=1e-12)
        return w

    asm = assemble_t3(S, 4, source=source)
    assert asm.valid
    for blk in asm.blocks:
        assert blk["gap_numerator"] / blk["gap_denominator"] == pytest.approx(2 ** blk["k"] + eps, rel=1e-12)


def test_assemble_t3_rejects_bad_witness():
    def source(k, offset):
        n = 2**k + 1
        y, A, z = _alt(n, offset)
        if k == 3:
            z[offset] = 0
        return T3Witness(y, n, A, z, k, offset)

    asm = assemble_t3(S, 3, source=source)
    assert not asm.valid and asm.failure_level == 3
    assert "supp(z)" in asm.failure

    def wrong_offset(k, offset):
        y, A, z = _alt(2**k + 1, 0)
        return T3Witness(y, 2**k + 1, A, z, k, 0)

    asm = assemble_t3(S, 2, source=wrong_offset)
    assert not asm.valid and "offset" in asm.failure


def test_assemble_t3_no_witness_and_errors():
    asm = assemble_t3(LpNorm(1), 2, budget=5)
    assert not asm.valid and asm.failure == "no witness for level 1"
    with pytest.raises(ValueError):
        assemble_t3(S, 0)
    with pytest.raises(ValueError):
        assemble_t3(S, 31)
