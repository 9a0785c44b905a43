"""Empirical estimation of greedy-type constants over sample families.

All estimates are suprema over finite families and therefore lower bounds for
the true constants; each carries the witness attaining it.  Families are
generated per sample index (counter-based seeding), evaluation is split into
chunks whose size depends only on the dimension, and maxima are reduced with
a fixed tie-break, so reports do not depend on the number of workers.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .functionals import dist_to_span
from .spaces import MixedNorm, NormOracle, spine_upto, unit_signs

__all__ = [
    "GRID_SMALL", "GRID_CERT", "SampleFamily", "Estimate", "ConstantsReport",
    "CapExceeded", "BENCHMARKS", "ZERO_TOL",
    "mask_tables", "ratio_tables", "estimate_quasi_greedy", "estimate_ratio_constant",
    "estimate_unconditionality", "estimate_democracy", "partial_democracy_witness",
    "PartialDemocracyWitness", "constants_report", "resolve_workers",
]

GRID_SMALL = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
GRID_CERT = (-2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0)
ZERO_TOL = 1e-13
MAX_ENGINE_DIM = 14
MAX_FAMILY = 5_000_000
BENCHMARKS = ("tilde", "check", "partial_sum", "prefix_tail", "hathat")
_ALIASES = {"S_m": "partial_sum", "sm": "partial_sum", "prefix": "prefix_tail"}


class CapExceeded(RuntimeError):
    """A certification-tier resource cap was hit."""


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get("GREEDYLAB_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, workers or 1)


@dataclass(frozen=True)
class SampleFamily:
    """Reproducible vectors of length ``dim``.

    ``kind='grid'`` enumerates every vector with entries in ``grid``;
    ``kind='random'`` draws ``count`` vectors, sample i from a generator keyed
    on ``(seed, i)``.  With ``include_basic`` the family starts with e_1 and
    e_1 + e_2, which pin every ratio constant at >= 1.
    """

    dim: int
    kind: str = "random"
    count: int = 100
    seed: int = 0
    grid: tuple[float, ...] = GRID_SMALL
    include_basic: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind not in ("grid", "random"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "grid" and len(self.grid) ** self.dim > MAX_FAMILY:
            raise CapExceeded(f"grid family of size {len(self.grid)}^{self.dim} exceeds {MAX_FAMILY}")

    @property
    def _basic(self) -> list[np.ndarray]:
        if not self.include_basic:
            return []
        out = [np.eye(1, self.dim, 0)[0]]
        if self.dim >= 2:
            out.append(np.eye(1, self.dim, 0)[0] + np.eye(1, self.dim, 1)[0])
        return out

    def __len__(self) -> int:
        body = len(self.grid) ** self.dim if self.kind == "grid" else self.count
        return len(self._basic) + body

    def vectors(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = len(self) if stop is None else min(stop, len(self))
        basic = self._basic
        rows = [basic[i] for i in range(start, min(stop, len(basic)))]
        lo, hi = max(start, len(basic)) - len(basic), stop - len(basic)
        if hi > lo:
            rows.extend(self._body(lo, hi))
        return np.array(rows, dtype=float).reshape(len(rows), self.dim)

    def _body(self, lo: int, hi: int) -> np.ndarray:
        if self.kind == "grid":
            g = np.asarray(self.grid)
            k = len(g)
            idx = np.arange(lo, hi)
            digits = (idx[:, None] // k ** np.arange(self.dim)[None, :]) % k
            return g[digits]
        return np.array([self._random(i) for i in range(lo, hi)])

    def _random(self, i: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, i])
        kind = rng.choice(3, size=self.dim, p=[0.2, 0.3, 0.5])
        gridvals = rng.choice(np.array([-1.0, -0.5, 0.5, 1.0]), size=self.dim)
        normal = rng.normal(size=self.dim)
        return np.where(kind == 0, 0.0, np.where(kind == 1, gridvals, normal))

    def to_json(self) -> dict:
        return {"dim": self.dim, "kind": self.kind, "count": self.count, "seed": self.seed,
                "grid": list(self.grid), "include_basic": self.include_basic}


@dataclass
class Estimate:
    name: str
    value: float
    witness: dict | None = None
    note: str = ""


@dataclass
class ConstantsReport:
    space: str
    family: dict
    estimates: dict[str, Estimate] = field(default_factory=dict)

    def rows(self, experiment: str = "constants") -> list[dict]:
        return [{"experiment": experiment, "space": self.space, "dim": self.family.get("dim", ""),
                 "m": (e.witness or {}).get("m", ""), "quantity": e.name, "value": e.value,
                 "witness": e.witness} for e in self.estimates.values()]


# ---------------------------------------------------------------------------
# chunked parallel map with order-independent reduction

def _chunk_size(dim: int) -> int:
    return max(1, 2_000_000 // ((1 << dim) * dim))


def _map_chunks(fn: Callable, args: tuple, n_items: int, chunk: int, workers: int) -> list:
    bounds = [(lo, min(lo + chunk, n_items)) for lo in range(0, n_items, chunk)]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(*args, lo, hi) for lo, hi in bounds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futures]


def _better(a, b) -> bool:
    """Larger value wins; equal values keep the smaller key."""
    if b is None:
        return True
    return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])


def _reduce(parts: Iterable[dict]) -> dict:
    best: dict[str, tuple] = {}
    for part in parts:
        for name, cand in part.items():
            if _better(cand, best.get(name)):
                best[name] = cand
    return best


# ---------------------------------------------------------------------------
# subset tables

def mask_tables(n: int):
    """All subsets of {1..n} ordered by size then lex, as a bool matrix.

    Returns (sets, M, sizes, complement index, interval indices per length,
    prefix index per length).
    """
    if n > MAX_ENGINE_DIM:
        raise CapExceeded(f"subset tables limited to dim <= {MAX_ENGINE_DIM}")
    sets = [c for k in range(n + 1) for c in itertools.combinations(range(1, n + 1), k)]
    pos = {s: i for i, s in enumerate(sets)}
    M = np.zeros((len(sets), n), dtype=bool)
    for i, s in enumerate(sets):
        M[i, [a - 1 for a in s]] = True
    sizes = M.sum(axis=1)
    full = set(range(1, n + 1))
    comp = np.array([pos[tuple(sorted(full - set(s)))] for s in sets])
    intervals = [[0]] + [
        sorted({pos[tuple(range(st, min(st + m, n + 1)))] for st in range(1, n + 1)} | {0})
        for m in range(1, n + 1)]
    prefix = np.array([pos[tuple(range(1, m + 1))] for m in range(n + 1)])
    return sets, M, sizes, comp, intervals, prefix


def ratio_tables(norm: NormOracle, X: np.ndarray, benchmarks: Sequence[str] = BENCHMARKS):
    """Per-sample tables over all subsets A of {1..n} (n = X.shape[1]).

    Returns a dict with ``R`` (||x - P_A x||), ``greedy`` (A in G(x,|A|)),
    and for every benchmark an array ``bench[v, m]``, m = 0..n.
    """
    V, n = X.shape
    sets, M, sizes, comp, intervals, prefix = mask_tables(n)
    R = norm.batch(X[:, None, :] * ~M[None, :, :])
    absX = np.abs(X)
    min_in = np.where(M[None], absX[:, None, :], np.inf).min(axis=-1)
    max_out = np.where(M[None], 0.0, absX[:, None, :]).max(axis=-1)
    greedy = min_in >= max_out
    out = {"R": R, "greedy": greedy, "sets": sets, "sizes": sizes, "comp": comp}
    ms = range(n + 1)
    if "tilde" in benchmarks:
        out["tilde"] = np.stack([R[:, sizes <= m].min(axis=1) for m in ms], axis=1)
    if "check" in benchmarks:
        out["check"] = np.stack([R[:, intervals[m]].min(axis=1) for m in ms], axis=1)
    partial = R[:, prefix]
    if "partial_sum" in benchmarks:
        out["partial_sum"] = partial
    if "prefix_tail" in benchmarks:
        out["prefix_tail"] = np.minimum.accumulate(partial, axis=1)
    if "hathat" in benchmarks:
        if norm.monotone:
            out["hathat"] = partial.copy()
            out["hathat_flagged"] = np.zeros_like(partial, dtype=bool)
        else:
            hh = np.empty_like(partial)
            fl = np.zeros_like(partial, dtype=bool)
            for v in range(V):
                for m in ms:
                    fit = dist_to_span(X[v], range(1, m + 1), norm)
                    hh[v, m], fl[v, m] = fit.value, fit.flagged
            out["hathat"] = hh
            out["hathat_flagged"] = fl
    return out


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den with 0/0 -> nan (skipped) and finite/0 -> inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    zero_den = den < ZERO_TOL
    r = np.where(zero_den & (num < ZERO_TOL), np.nan, r)
    r = np.where(zero_den & (num >= ZERO_TOL), np.inf, r)
    return r


def _best_in(ratio: np.ndarray, valid: np.ndarray):
    """First (sample, subset) position attaining the maximum of ``ratio`` over ``valid``."""
    r = np.where(valid & ~np.isnan(ratio), ratio, -np.inf)
    top = r.max()
    if top == -np.inf:
        return None
    v, j = np.argwhere(r == top)[0]
    return float(top), int(v), int(j)


def _scan_chunk(norm: NormOracle, fam: SampleFamily, quantities: tuple[str, ...], lo: int, hi: int) -> dict:
    X = fam.vectors(lo, hi)
    benches = tuple(q for q in quantities if q in BENCHMARKS)
    T = ratio_tables(norm, X, benches)
    R, greedy, sets, sizes, comp = T["R"], T["greedy"], T["sets"], T["sizes"], T["comp"]
    nonempty = (sizes >= 1)[None, :]
    valid = greedy & nonempty
    out = {}
    for q in quantities:
        note = ""
        if q in ("C_q", "C_l", "C_l_pos"):
            num = R[:, comp] if q == "C_q" else R
            den = np.broadcast_to(R[:, :1], R.shape)
            # C_l admits m = 0 (G_0 x = 0), the finite-window stand-in for long flat tails
            allowed = greedy if q == "C_l" else valid
            best = _best_in(_ratio(num, den), allowed & (den >= ZERO_TOL))
            bench_vals = den
        else:
            bench = T[q][:, sizes]
            ok = valid.copy()
            if q == "hathat":
                flagged = T["hathat_flagged"][:, sizes]
                if flagged[ok].any():
                    note = f"{int(flagged[ok].sum())} flagged benchmark values excluded"
                ok &= ~flagged
            best = _best_in(_ratio(R, bench), ok)
            bench_vals = bench
            num = R
        if best is None:
            continue
        value, v, j = best
        A = sets[j]
        wit = {"sample": lo + v, "x": X[v].tolist(), "m": len(A), "A": list(A),
               "numerator": float(num[v, j]), "denominator": float(bench_vals[v, j])}
        if note:
            wit["note"] = note
        out[q] = (value, (lo + v, len(A), A), wit)
    return out


def _scan(norm, fam, quantities, workers):
    workers = resolve_workers(workers)
    parts = _map_chunks(_scan_chunk, (norm, fam, tuple(quantities)), len(fam), _chunk_size(fam.dim), workers)
    return _reduce(parts)


def _estimate(name, found) -> Estimate:
    if found is None:
        return Estimate(name, float("nan"), None, "no admissible datum")
    value, _, wit = found
    return Estimate(name, value, wit, wit.pop("note", "") if wit else "")


def estimate_quasi_greedy(norm: NormOracle, fam: SampleFamily, workers: int | None = None):
    """sup ||G_m x|| / ||x|| and sup ||x - G_m x|| / ||x|| over the family,
    every m and every greedy set.

    The suppression ratio also counts m = 0, where it equals 1; the supremum
    over m >= 1 alone is reported in the note.
    """
    if len(fam) == 0:
        raise ValueError("empty family")
    best = _scan(norm, fam, ("C_q", "C_l", "C_l_pos"), workers)
    cl = _estimate("C_l", best.get("C_l"))
    pos = best.get("C_l_pos")
    cl.note = f"m = 0 included; sup over m >= 1 is {pos[0]!r}" if pos else "m = 0 included"
    return _estimate("C_q", best.get("C_q")), cl


def estimate_ratio_constant(norm: NormOracle, fam: SampleFamily, benchmark: str,
                            workers: int | None = None) -> Estimate:
    """sup ||x - G_m x|| / benchmark_m(x) over the family, every m >= 1 and
    every greedy set.

    Benchmarks: ``tilde`` (almost greedy), ``check`` (consecutive almost
    greedy), ``partial_sum`` (partially greedy), ``prefix_tail`` (strong
    partially greedy), ``hathat`` (super-strong partially greedy).
    """
    benchmark = _ALIASES.get(benchmark, benchmark)
    if benchmark not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    if len(fam) == 0:
        raise ValueError("empty family")
    return _estimate(benchmark, _scan(norm, fam, (benchmark,), workers).get(benchmark))


# ---------------------------------------------------------------------------
# unconditionality

_SHRINK = np.array([0.0, 0.25, 0.5, 1.0])


def _uncond_chunk(norm, fam, shrink_samples, max_signs, lo, hi):
    X = fam.vectors(lo, hi)
    n = fam.dim
    best = None
    if n <= 4:
        factors = np.array(list(itertools.product(np.concatenate([-_SHRINK[1:], _SHRINK]), repeat=n)))
    else:
        factors = None
    if 2**n <= max_signs:
        signs = np.array(list(itertools.product([1.0, -1.0], repeat=n)))
    else:
        signs = None
    for v in range(X.shape[0]):
        b = X[v]
        nb = norm(b)
        if nb < ZERO_TOL:
            continue
        rng = np.random.default_rng([fam.seed, lo + v, 7])
        F = factors
        if F is None:
            S = signs if signs is not None else rng.choice([1.0, -1.0], size=(max_signs, n))
            shrink = rng.choice(_SHRINK, size=(shrink_samples, n)) * rng.choice([1.0, -1.0], size=(shrink_samples, n))
            F = np.vstack([S, shrink])
        vals = norm.batch(F * b[None, :]) / nb
        j = int(np.argmax(vals))
        cand = (float(vals[j]), (lo + v, j), {"sample": lo + v, "b": b.tolist(), "a": (F[j] * b).tolist()})
        if _better(cand, best):
            best = cand
    return {"K": best} if best else {}


def estimate_unconditionality(norm: NormOracle, fam: SampleFamily, workers: int | None = None,
                              shrink_samples: int = 256, max_signs: int = 1 << 16) -> Estimate:
    """sup ||sum a_n e_n|| / ||sum b_n e_n|| with a_n = f_n b_n, |f_n| <= 1.

    Factors: every sign pattern (when there are at most ``max_signs``) plus a
    seeded sample of shrink patterns from {0, 1/4, 1/2, 1} with signs; all
    patterns when dim <= 4.
    """
    if len(fam) == 0:
        raise ValueError("empty family")
    workers = resolve_workers(workers)
    chunk = max(1, 4096 // max(1, min(2**fam.dim, max_signs)))
    parts = _map_chunks(_uncond_chunk, (norm, fam, shrink_samples, max_signs), len(fam), chunk, workers)
    return _estimate("K", _reduce(parts).get("K"))


# ---------------------------------------------------------------------------
# democracy

FLAVORS = ("plain", "super", "disjoint", "disjoint_super", "conservative")
_FLAVOR_NAMES = {"plain": "Delta", "super": "Delta_s", "disjoint": "Delta_d",
                 "disjoint_super": "Delta_sd", "conservative": "Delta_c"}


def estimate_democracy(norm: NormOracle, max_card: int, flavor: str = "plain",
                       window: int | Sequence[int] | None = None, field: str = "real") -> Estimate:
    """sup ||1_{eps A}|| / ||1_{delta B}|| over nonempty A, B inside the window,
    |A| <= |B| <= max_card.

    ``super`` flavors range over signs, ``disjoint`` ones require A and B
    disjoint, ``conservative`` requires A < B.
    """
    if max_card < 1:
        raise ValueError("max_card must be >= 1")
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    positions = tuple(range(1, (window or 2 * max_card) + 1)) if window is None or isinstance(window, int) \
        else tuple(sorted(set(window)))
    paired = flavor in ("disjoint", "disjoint_super", "conservative")
    if paired and len(positions) < 2 * max_card:
        raise ValueError(f"window of {len(positions)} positions too small for disjoint sets of size {max_card}")
    if len(positions) < max_card:
        raise ValueError("window smaller than max_card")
    signed = flavor in ("super", "disjoint_super")
    units = unit_signs(field) if signed else np.array([1.0])
    n = positions[-1]
    sets = [c for k in range(1, max_card + 1) for c in itertools.combinations(positions, k)]
    hi = np.empty(len(sets))
    lo = np.empty(len(sets))
    hi_sign, lo_sign = [], []
    for size in range(1, max_card + 1):
        idx = [i for i, s in enumerate(sets) if len(s) == size]
        pats = np.array(list(itertools.product(units, repeat=size)))
        rows = np.zeros((len(idx), len(pats), n), dtype=pats.dtype)
        for r, i in enumerate(idx):
            rows[r][:, [a - 1 for a in sets[i]]] = pats
        vals = norm.batch(rows)
        for r, i in enumerate(idx):
            jh, jl = int(np.argmax(vals[r])), int(np.argmin(vals[r]))
            hi[i], lo[i] = vals[r, jh], vals[r, jl]
            hi_sign.append((i, pats[jh]))
            lo_sign.append((i, pats[jl]))
    hs = dict(hi_sign)
    ls = dict(lo_sign)
    sizes = np.array([len(s) for s in sets])
    bits = np.array([sum(1 << (a - 1) for a in s) for s in sets], dtype=object)
    mins = np.array([s[0] for s in sets])
    maxs = np.array([s[-1] for s in sets])
    ok = sizes[:, None] <= sizes[None, :]
    if flavor in ("disjoint", "disjoint_super"):
        ok &= np.array([[(a & b) == 0 for b in bits] for a in bits])
    if flavor == "conservative":
        ok &= maxs[:, None] < mins[None, :]
    ratio = np.where(ok, hi[:, None] / lo[None, :], -np.inf)
    top = ratio.max()
    i, j = np.argwhere(ratio == top)[0]

    def fmt(signs):
        return [complex(s).real if field == "real" else [complex(s).real, complex(s).imag] for s in signs]

    wit = {"A": list(sets[i]), "eps": fmt(hs[i]), "B": list(sets[j]), "delta": fmt(ls[j]),
           "numerator": float(hi[i]), "denominator": float(lo[j])}
    return Estimate(_FLAVOR_NAMES[flavor], float(top), wit)


@dataclass
class PartialDemocracyWitness:
    A: tuple[int, ...]
    rows: list[dict]
    min_ratio: float
    inconclusive: bool = False


def _default_partial_set(norm: NormOracle, n: int, bound: int) -> tuple[int, ...]:
    if isinstance(norm, MixedNorm):
        sp = spine_upto(norm.p_exp, norm.q_exp, bound)
        if len(sp) >= n:
            return sp[:n]
    # grow A one position at a time, keeping ||1_A|| as large as possible
    A: list[int] = []
    for _ in range(n):
        cands = [k for k in range(1, bound + 1) if k not in A]
        vals = [norm(_ind(A + [k], bound)) for k in cands]
        A.append(cands[int(np.argmax(vals))])
    return tuple(sorted(A))


def _ind(A, n):
    v = np.zeros(n)
    v[[a - 1 for a in A]] = 1.0
    return v


def _min_indicator(norm: NormOracle, pool: Sequence[int], n: int, bound: int, cap: int):
    """Smallest ||1_B|| over B subset of pool, |B| = n (exhaustive under ``cap``)."""
    if math.comb(len(pool), n) <= cap:
        cands = list(itertools.combinations(pool, n))
    else:
        runs = [tuple(pool[i:i + n]) for i in range(len(pool) - n + 1)]
        grown: list[int] = []
        for _ in range(n):
            rest = [k for k in pool if k not in grown]
            vals = [norm(_ind(grown + [k], bound)) for k in rest]
            grown.append(rest[int(np.argmin(vals))])
        cands = runs + [tuple(sorted(grown))]
    X = np.zeros((len(cands), bound))
    for r, B in enumerate(cands):
        X[r, [b - 1 for b in B]] = 1.0
    vals = norm.batch(X)
    j = int(np.flatnonzero(vals == vals.min())[0])
    return cands[j], float(vals[j])


def partial_democracy_witness(norm: NormOracle, n: int, search_bound: int,
                              A: Sequence[int] | None = None, target: float = 1.0 + 1e-9,
                              exhaustive_cap: int = 20_000) -> PartialDemocracyWitness | None:
    """Evidence that partial democracy fails at the set A (|A| = n).

    Every finite D containing A sits inside some initial segment {1..d}, and a
    B beyond d avoids D; so for each d from max(A) to ``search_bound - n`` the
    best B inside {d+1..search_bound} is reported.  Returns None when some d
    admits no B with ratio ||1_A|| / ||1_B|| >= target.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    A = tuple(sorted(A)) if A is not None else _default_partial_set(norm, n, search_bound)
    if len(A) != n:
        raise ValueError("A must have n elements")
    top = norm(_ind(A, search_bound))
    rows = []
    for d in range(A[-1], search_bound - n + 1):
        B, val = _min_indicator(norm, list(range(d + 1, search_bound + 1)), n, search_bound, exhaustive_cap)
        rows.append({"D": [1, d], "B": list(B), "ratio": top / val})
    if not rows:
        return PartialDemocracyWitness(A, [], float("nan"), inconclusive=True)
    low = min(r["ratio"] for r in rows)
    if low < target:
        return None
    return PartialDemocracyWitness(A, rows, low)


# ---------------------------------------------------------------------------

def constants_report(norm: NormOracle, fam: SampleFamily, max_card: int | None = None,
                     window: int | Sequence[int] | None = None, workers: int | None = None,
                     unconditional_family: SampleFamily | None = None) -> ConstantsReport:
    """Every constant for one oracle and family."""
    rep = ConstantsReport(norm.describe(), fam.to_json())
    cq, cl = estimate_quasi_greedy(norm, fam, workers)
    rep.estimates.update({"C_q": cq, "C_l": cl})
    rep.estimates["K"] = estimate_unconditionality(norm, unconditional_family or fam, workers)
    # normalization of the basis on the window: min and max of ||e_n||
    e_norms = norm.batch(np.eye(fam.dim))
    lo, hi = int(np.argmin(e_norms)), int(np.argmax(e_norms))
    rep.estimates["norm_e_min"] = Estimate("norm_e_min", float(e_norms[lo]), {"n": lo + 1}, "report field")
    rep.estimates["norm_e_max"] = Estimate("norm_e_max", float(e_norms[hi]), {"n": hi + 1}, "report field")
    card = max_card or max(1, fam.dim // 2)
    win = window or max(fam.dim, 2 * card)
    for flavor in FLAVORS:
        est = estimate_democracy(norm, card, flavor, win)
        rep.estimates[est.name] = est
    labels = {"tilde": "C_a", "check": "C_ca", "partial_sum": "C_pg",
              "prefix_tail": "C_spg", "hathat": "C_sspg"}
    best = _scan(norm, fam, BENCHMARKS, workers)
    for bench, label in labels.items():
        est = _estimate(label, best.get(bench))
        rep.estimates[label] = est
    return rep
