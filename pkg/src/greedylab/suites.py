"""Property suites run by ``greedylab verify``.

Each suite returns a :class:`SuiteResult` holding CSV rows (worst observed
values with witnesses) and a pass flag.  Sample evaluation goes through the
same chunked map as the constants module, so results do not depend on the
worker count.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .constants import (ZERO_TOL, SampleFamily, _map_chunks, _reduce, _ratio,
                        mask_tables, ratio_tables, resolve_workers)
from .constructions import build_mixed_instance
from .spaces import NormOracle, space_constants, spine_sequence
from .tga import greedy_sets, project_out

__all__ = ["SuiteResult", "SUITES", "chain", "prop1dim", "theorem_t1", "example4", "aabw",
           "sign_line_table"]


@dataclass
class SuiteResult:
    suite: str
    space: str
    dim: int | str
    passed: bool = True
    rows: list[dict] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)

    def add(self, quantity: str, value, witness=None, m="", ok: bool | None = None, detail: str = ""):
        self.rows.append({"experiment": self.suite, "space": self.space, "dim": self.dim, "m": m,
                          "quantity": quantity, "value": value, "witness": witness})
        if ok is not None:
            self.passed &= bool(ok)
            self.lines.append(f"{'PASS' if ok else 'FAIL'} {quantity} = {value}{' ' + detail if detail else ''}")


def _merge_counts(parts):
    counts: dict[str, int] = {}
    for part in parts:
        for k, v in part.pop("_counts", {}).items():
            counts[k] = counts.get(k, 0) + v
    return counts


def _run(chunk_fn, args, fam: SampleFamily, chunk: int, workers):
    parts = _map_chunks(chunk_fn, args, len(fam), chunk, resolve_workers(workers))
    counts = _merge_counts(parts)
    return _reduce(parts), counts


def _tol_gap(a, b, tol):
    """a - b measured against tol * max(1, |b|); positive means a > b beyond tolerance."""
    return a - b - tol * np.maximum(1.0, np.abs(b))


# ---------------------------------------------------------------------------
# chain: sigma_tilde <= sigma_check <= ||x - S_m x||, plus sigma_hathat checks

def _chain_chunk(norm, fam, tol, lo, hi):
    X = fam.vectors(lo, hi)
    T = ratio_tables(norm, X, ("tilde", "check", "partial_sum", "hathat"))
    til, chk, ps, hh = T["tilde"], T["check"], T["partial_sum"], T["hathat"]
    pairs = {"tilde<=check": (til, chk), "check<=partial_sum": (chk, ps), "hathat<=partial_sum": (hh, ps)}
    if norm.monotone:
        pairs["partial_sum<=hathat"] = (ps, hh)
        pairs["partial_sum<=2*hathat"] = (ps, 2 * hh)
    out, counts = {}, {}
    for name, (a, b) in pairs.items():
        gap = _tol_gap(a, b, tol)
        counts[name] = int((gap > 0).sum())
        slack = a - b
        v, m = np.unravel_index(int(np.argmax(slack)), slack.shape)
        wit = {"sample": lo + int(v), "x": X[v].tolist(), "m": int(m),
               "lhs": float(a[v, m]), "rhs": float(b[v, m])}
        out[name] = (float(slack[v, m]), (lo + int(v), int(m)), wit)
    out["_counts"] = counts
    return out


def chain(norm: NormOracle, fam: SampleFamily, tol: float = 1e-12, workers=None) -> SuiteResult:
    """sigma_tilde_m <= sigma_check_m <= ||x - S_m x|| and sigma_hathat_m <= ||x - S_m x||
    for every sample and 0 <= m <= dim; lattice norms also get
    sigma_hathat_m = ||x - S_m x|| and ||x - S_m x|| <= 2 sigma_hathat_m."""
    res = SuiteResult("chain", norm.describe(), fam.dim)
    best, counts = _run(_chain_chunk, (norm, fam, tol), fam, max(1, 4096 // (1 << min(fam.dim, 12))) * 8, workers)
    res.add("samples", len(fam))
    for name, found in best.items():
        slack, _, wit = found
        res.add(f"{name}:max_slack", slack, wit, m=wit["m"])
        res.add(f"{name}:violations", counts[name], ok=counts[name] == 0)
    return res


# ---------------------------------------------------------------------------
# one-dimensional subspaces and intervals

def _sign_patterns(n: int, max_card: int):
    sets, *_ = mask_tables(n)
    pos = {s: i for i, s in enumerate(sets)}
    rows, owner = [], []
    for size in range(1, max_card + 1):
        for B in itertools.combinations(range(1, n + 1), size):
            for tail in itertools.product((1.0, -1.0), repeat=size - 1):
                d = np.zeros(n)
                d[[b - 1 for b in B]] = (1.0,) + tail
                rows.append(d)
                owner.append(pos[B])
    return np.array(rows).reshape(len(rows), n), np.array(owner, dtype=int)


def _is_l1(norm) -> bool:
    return getattr(norm, "kind", "") in ("lp", "weighted") and getattr(norm, "exponent", None) == 1.0


def sign_line_table(norm: NormOracle, X: np.ndarray, max_card: int | None = None):
    """L[v, s] = min over signs and real t of ||x_v - t 1_{eps B_s}|| for every
    subset B_s of {1..n} (the ordering of :func:`mask_tables`); L[v, 0] = ||x_v||.

    In l1 the map t -> ||x - t d|| is convex and piecewise linear with kinks
    at t = d_k x_k, so the minimum over those points is exact.  Other norms
    use golden-section search, flagged for quasi-norms.
    """
    V, n = X.shape
    max_card = n if max_card is None else max_card
    P, owner = _sign_patterns(n, max_card)
    K = P.shape[0]
    nx = norm.batch(X)
    flagged = norm.p < 1
    if _is_l1(norm):
        T = P[None, :, :] * X[:, None, :]                      # candidate t per kink (V, K, n)
        diffs = X[:, None, None, :] - T[:, :, :, None] * P[None, :, None, :]
        vals = norm.batch(diffs).min(axis=-1)
    else:
        flat_x = np.repeat(X, K, axis=0)
        flat_d = np.tile(P, (V, 1))
        radius = 2.0 ** (1.0 / norm.p) * np.repeat(nx, K) / np.maximum(norm.batch(flat_d), ZERO_TOL)

        def f(t):
            return norm.batch(flat_x - t[:, None] * flat_d)

        if norm.p < 1:
            grid = np.linspace(-1.0, 1.0, 201)
            G = radius[:, None] * grid[None, :]
            gv = norm.batch(flat_x[:, None, :] - G[:, :, None] * flat_d[:, None, :])
            centre = G[np.arange(G.shape[0]), gv.argmin(axis=1)]
            step = radius * (grid[1] - grid[0])
            _, vals = fn.golden_section(f, centre - step, centre + step)
            vals = np.minimum(vals, gv.min(axis=1))
        else:
            _, vals = fn.golden_section(f, -radius, radius)
        vals = vals.reshape(V, K)
    vals = np.minimum(vals, nx[:, None])
    L = np.full((V, 1 << n), np.inf)
    L[:, 0] = nx
    for s in np.unique(owner):
        L[:, s] = vals[:, owner == s].min(axis=1)
    return L, flagged


def _prop1dim_chunk(norm, fam, max_card, lo, hi):
    X = fam.vectors(lo, hi)
    T = ratio_tables(norm, X, ())
    R, greedy, sets, sizes = T["R"], T["greedy"], T["sets"], T["sizes"]
    L, flagged = sign_line_table(norm, X, max_card)
    bits = np.array([sum(1 << (a - 1) for a in s) for s in sets])
    allowed = ((bits[:, None] & bits[None, :]) == 0) & (sizes[None, :] <= sizes[:, None])
    allowed &= (sizes[None, :] <= max_card)
    den = np.where(allowed[None, :, :], L[:, None, :], np.inf).min(axis=-1)
    ratio = _ratio(R, den)
    valid = greedy & (sizes >= 1)[None, :]
    r = np.where(valid & ~np.isnan(ratio), ratio, -np.inf)
    out = {}
    top = r.max()
    if top > -np.inf:
        v, j = np.argwhere(r == top)[0]
        k = int(np.argmin(np.where(allowed[j], L[v], np.inf)))
        out["ratio_ii"] = (float(top), (lo + int(v), int(sizes[j]), sets[j]),
                           {"sample": lo + int(v), "x": X[v].tolist(), "m": int(sizes[j]), "A": list(sets[j]),
                            "B": list(sets[k]), "numerator": float(R[v, j]), "denominator": float(den[v, j])})
    out["_counts"] = {"flagged": int(flagged) * (hi - lo)}
    return out


def _interval_line_ratio(norm, x, max_m):
    """max over m of min over A in G(x, m) of ||x - P_A x|| / line-interval distance."""
    worst = None
    supp = np.count_nonzero(x)
    for m in range(1, min(max_m, supp) + 1):
        cands = []
        for A in greedy_sets(x, m):
            num = norm(project_out(x, A))
            d = fn.dist_to_interval_line(x, m, A, norm)
            r = math.nan if (num < ZERO_TOL and d.value < ZERO_TOL) else (math.inf if d.value < ZERO_TOL else num / d.value)
            cands.append((r, A, num, d))
        cands = [c for c in cands if not math.isnan(c[0])]
        if not cands:
            continue
        r, A, num, d = min(cands, key=lambda c: c[0])
        if worst is None or r > worst[0]:
            I, t = d.witness
            worst = (r, {"m": m, "A": list(A), "I": I.to_json(), "t": t, "numerator": num, "denominator": d.value})
    return worst


def prop1dim(norm: NormOracle, fam: SampleFamily, C: float, max_card: int | None = None,
             interval_samples: int = 500, workers=None) -> SuiteResult:
    """Worst ratio ||x - P_A x|| / inf_{t, eps, B} ||x - t 1_{eps B}|| (B disjoint
    from A, |B| <= |A|) over the family and all greedy A, against ``C``; plus
    the interval form (minimum over greedy sets, intervals left or right of A
    meeting the support in at most m points) on the first ``interval_samples``."""
    res = SuiteResult("prop1dim", norm.describe(), fam.dim)
    card = fam.dim if max_card is None else max_card
    n = fam.dim
    chunk = max(1, 8_000_000 // (3**n * n * n // 2 + 4**n))
    best, counts = _run(_prop1dim_chunk, (norm, fam, card), fam, chunk, workers)
    ii = best.get("ratio_ii")
    if ii is None:
        res.add("ratio_ii", math.nan, ok=False, detail="no admissible datum")
        return res
    res.add("ratio_ii", ii[0], ii[2], m=ii[2]["m"], ok=1 - 1e-9 <= ii[0] <= C * (1 + 1e-9),
            detail=f"in [1, {C}]")
    if counts.get("flagged"):
        res.lines.append(f"note: {counts['flagged']} samples used the quasi-norm grid search")
    worst = None
    for i in range(min(interval_samples, len(fam))):
        x = fam.vectors(i, i + 1)[0]
        got = _interval_line_ratio(norm, x, fam.dim)
        if got and (worst is None or got[0] > worst[0]):
            worst = (got[0], dict(got[1], sample=i, x=x.tolist()))
    if worst is not None:
        res.add("ratio_iii", worst[0], worst[1], m=worst[1]["m"], ok=worst[0] <= C * (1 + 1e-9), detail=f"<= {C}")
    return res


# ---------------------------------------------------------------------------
# Theorem: CAG against min_k sigma_check_k, AG, and the 1-CAG => 1-AG clause

def _t1_chunk(norm, fam, lo, hi):
    X = fam.vectors(lo, hi)
    T = ratio_tables(norm, X, ("tilde", "check"))
    R, greedy, sizes, sets = T["R"], T["greedy"], T["sizes"], T["sets"]
    til = T["tilde"][:, sizes]
    chk = T["check"][:, sizes]
    chk_min = np.minimum.accumulate(T["check"], axis=1)[:, sizes]
    valid = greedy & (sizes >= 1)[None, :]
    ra, rca, rk = _ratio(R, til), _ratio(R, chk), _ratio(R, chk_min)
    out = {}
    for name, r, den in (("C_a", ra, til), ("C_ca", rca, chk), ("C_ca_min_k", rk, chk_min)):
        rr = np.where(valid & ~np.isnan(r), r, -np.inf)
        top = rr.max()
        if top == -np.inf:
            continue
        v, j = np.argwhere(rr == top)[0]
        out[name] = (float(top), (lo + int(v), int(sizes[j]), sets[j]),
                     {"sample": lo + int(v), "x": X[v].tolist(), "m": int(sizes[j]), "A": list(sets[j]),
                      "numerator": float(R[v, j]), "denominator": float(den[v, j])})
    both = valid & ~np.isnan(ra) & ~np.isnan(rca)
    out["_counts"] = {"order_ca_le_a": int((both & (rca > ra * (1 + 1e-12))).sum()),
                      "order_min_k_ge_ca": int((both & ~np.isnan(rk) & (rk < rca * (1 - 1e-12))).sum())}
    return out


def theorem_t1(norm: NormOracle, fam: SampleFamily, workers=None) -> SuiteResult:
    """Per-sample ordering ratio(check) <= ratio(tilde) <= and
    ratio(min_k check_k) >= ratio(check); estimates of C_a, C_ca and the
    min-over-k constant; for p = 1, C_ca = 1 must force C_a = 1."""
    res = SuiteResult("theorem-t1", norm.describe(), fam.dim)
    best, counts = _run(_t1_chunk, (norm, fam), fam, max(1, 2_000_000 // ((1 << fam.dim) * fam.dim)), workers)
    for name in ("C_a", "C_ca", "C_ca_min_k"):
        if name in best:
            val, _, wit = best[name]
            res.add(name, val, wit, m=wit["m"], ok=val >= 1 - 1e-9, detail=">= 1")
    for name, c in counts.items():
        res.add(f"{name}:violations", c, ok=c == 0)
    if norm.p == 1 and "C_ca" in best and best["C_ca"][0] <= 1 + 1e-9:
        ca = best["C_a"][0]
        res.add("one_cag_implies_one_ag", ca, ok=ca <= 1 + 1e-9, detail="C_a with C_ca = 1")
    return res


# ---------------------------------------------------------------------------
# the mixed l_p x l_q instance

def example4(C: float = 4.0, p: float = 1.0, q: float = 2.0, window: int = 64, n: int = 4,
             samples: int = 10_000, seed: int = 0) -> SuiteResult:
    inst = build_mixed_instance(p, q, window, n=n, interval_samples=samples, C=C, seed=seed)
    rep = inst.report
    res = SuiteResult("example4", inst.norm.describe(), window)
    spine = tuple(rep["spine"])
    res.add("spine", json_list(spine), ok=rep["spine_conditions"] and spine == spine_sequence(p, q, len(spine)))
    res.add("unconditionality", rep["unconditionality"], ok=abs(rep["unconditionality"] - 1) <= 1e-9)
    A = spine[:n]
    expected = n ** (1 - 1 / q) if p == 1 else None
    low, wit = _all_B_ratio(inst.norm, A, window)
    ok = low >= (expected if expected is not None else 1.0) - 1e-12
    res.add("partial_democracy_min_ratio_all_B", low, wit, m=n, ok=ok,
            detail=f">= {expected:g} over every B outside A" if expected else "")
    pd = rep.get("partial_democracy")
    res.add("partial_democracy_witness", None if pd is None else pd["min_ratio"],
            pd, m=n, ok=pd is not None and not pd["inconclusive"])
    chk = rep["intervals_plus_1dim"]
    res.add("intervals_plus_1dim", chk["worst_ratio"], chk["witness"], ok=chk["passed"],
            detail=f"<= {chk['C']} over {chk['samples']} triples")
    return res


def json_list(v):
    return "(" + ",".join(str(int(a)) for a in v) + ")"


def _all_B_ratio(norm, A, window):
    """min ||1_A|| / ||1_B|| over every B of size |A| inside the window, disjoint from A."""
    pool = [k for k in range(1, window + 1) if k not in set(A)]
    top = norm(np.isin(np.arange(1, window + 1), A).astype(float))
    low, arg = math.inf, None
    combos = itertools.combinations(pool, len(A))
    while True:
        block = list(itertools.islice(combos, 50_000))
        if not block:
            break
        idx = np.array(block) - 1
        Xb = np.zeros((len(block), window))
        np.put_along_axis(Xb, idx, 1.0, axis=1)
        vals = top / norm.batch(Xb)
        j = int(np.argmin(vals))
        if vals[j] < low:
            low, arg = float(vals[j]), list(block[j])
    return low, {"A": list(A), "B": arg}


# ---------------------------------------------------------------------------
# p-convexity estimates

def aabw(norm: NormOracle, samples: int = 200, dim: int = 8, seed: int = 0, field: str = "real") -> SuiteResult:
    """The three p-convexity estimates on seeded (y, x_n, a_n), |J| <= 6, plus
    the p-triangle inequality."""
    from .spaces import aabw_check, p_triangle_gap

    res = SuiteResult("aabw", norm.describe(), dim)
    worst = {1: (-math.inf, None), 2: (-math.inf, None), 3: (-math.inf, None), 0: (-math.inf, None)}
    viol = {k: 0 for k in worst}
    for i in range(samples):
        rng = np.random.default_rng([seed, i, 11])
        k = int(rng.integers(1, 7))
        xs = rng.normal(size=(k, dim)) * (rng.random((k, dim)) < 0.6)
        y = rng.normal(size=dim)
        for which in (1, 2, 3):
            a = rng.random(k) if which == 1 else rng.uniform(-1, 1, size=k)
            lhs, rhs = aabw_check(norm, list(xs), a, y, which=which, field=field)
            excess = lhs - rhs
            viol[which] += excess > 1e-12 * max(1.0, rhs)
            if excess > worst[which][0]:
                worst[which] = (excess, {"sample": i, "which": which, "lhs": lhs, "rhs": rhs})
        gap = -p_triangle_gap(norm, xs[0], y)
        viol[0] += gap > 1e-12 * max(1.0, norm(y))
        if gap > worst[0][0]:
            worst[0] = (gap, {"sample": i})
    consts = space_constants(norm.p, field)
    res.add("A_p", consts.A_p)
    res.add("B_p", consts.B_p)
    names = {0: "p_triangle", 1: "estimate_1", 2: "estimate_2", 3: "estimate_3"}
    for key, name in names.items():
        res.add(f"{name}:max_excess", worst[key][0], worst[key][1])
        res.add(f"{name}:violations", viol[key], ok=viol[key] == 0)
    return res


SUITES = ("chain", "prop1dim", "theorem-t1", "example4", "aabw")
