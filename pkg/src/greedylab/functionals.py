"""Benchmark error functionals for m-term approximation.

Every functional returns a :class:`FunctionalValue` carrying the minimizing
witness, so the value can be re-evaluated independently.  Brute force is used
wherever the search space is finite.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from .spaces import NormOracle, as_vector, canonical, support
from .tga import (IndexInterval, canonical_greedy_set, index_set, is_greedy_set,
                  partial_sum, project_out)

__all__ = [
    "FunctionalValue", "SpanFit", "LineFit",
    "sigma_tilde", "sigma_tilde_profile", "sigma_check", "sigma_check_profile",
    "sigma_hathat", "dist_to_span", "best_prefix_tail", "min_sigma",
    "golden_section", "dist_to_sign_line", "dist_to_interval_line",
    "sign_line_distances", "subsets_upto", "MAX_BRUTE_SUPPORT",
]

MAX_BRUTE_SUPPORT = 20
_CHUNK = 1 << 15
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    witness: Any
    flagged: bool = False
    note: str = ""


@dataclass(frozen=True)
class SpanFit:
    value: float
    indices: tuple[int, ...]
    coeffs: np.ndarray
    flagged: bool = False
    method: str = "closed-form"


@dataclass(frozen=True)
class LineFit:
    t: float
    value: float
    flagged: bool = False


def subsets_upto(items: Sequence[int], max_size: int) -> Iterable[tuple[int, ...]]:
    """Subsets of ``items`` with at most ``max_size`` elements, by size then lex."""
    for size in range(min(max_size, len(items)) + 1):
        yield from itertools.combinations(items, size)


def _removal_norms(v: np.ndarray, sets: list[tuple[int, ...]], norm: NormOracle) -> np.ndarray:
    out = np.empty(len(sets))
    for lo in range(0, len(sets), _CHUNK):
        block = sets[lo:lo + _CHUNK]
        X = np.repeat(v[None, :], len(block), axis=0)
        for r, A in enumerate(block):
            idx = [a - 1 for a in A if a <= v.shape[0]]
            if idx:
                X[r, idx] = 0
        out[lo:lo + len(block)] = norm.batch(X)
    return out


def _pick(values: np.ndarray, sets: list) -> tuple[float, Any]:
    best = values.min()
    ties = [sets[i] for i in np.flatnonzero(values == best)]
    return float(best), min(ties)


def _pad(A: tuple[int, ...], m: int, supp: Sequence[int]) -> tuple[int, ...]:
    taken = set(supp) | set(A)
    extra, n = [], 1
    while len(A) + len(extra) < m:
        if n not in taken:
            extra.append(n)
        n += 1
    return index_set(A + tuple(extra))


def sigma_tilde(x, m: int, norm: NormOracle, max_support: int = MAX_BRUTE_SUPPORT) -> FunctionalValue:
    """inf ||x - P_A x|| over |A| = m.

    Sets may run past the support, so the search covers subsets of supp(x)
    of size <= m; the witness is padded to size m with the smallest free
    indices.  Exhaustive up to ``max_support`` support points; beyond that the
    closed form (drop the m largest) is certified for symmetric lattice norms
    and a swap local search is used, and flagged, otherwise.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    v = canonical(x)
    supp = support(v)
    if m >= len(supp):
        return FunctionalValue(0.0, _pad(tuple(supp), m, supp))
    if len(supp) <= max_support:
        sets = list(subsets_upto(supp, m))
        value, A = _pick(_removal_norms(v, sets, norm), sets)
        return FunctionalValue(value, _pad(A, m, supp))
    A = canonical_greedy_set(v, m)
    if norm.monotone and norm.symmetric:
        return FunctionalValue(norm(project_out(v, A)), A, note="closed form")
    return _swap_search(v, m, A, norm)


def _swap_search(v, m, A, norm) -> FunctionalValue:
    supp = support(v)
    current = set(A)
    best = norm(project_out(v, current))
    improved = True
    while improved:
        improved = False
        for a in sorted(current):
            for b in supp:
                if b in current:
                    continue
                trial = (current - {a}) | {b}
                val = norm(project_out(v, trial))
                if val < best:
                    best, current, improved = val, trial, True
                    break
            if improved:
                break
    return FunctionalValue(best, index_set(current), flagged=True,
                           note="heuristic swap search, optimality not certified")


def sigma_tilde_profile(x, norm: NormOracle) -> list[FunctionalValue]:
    """sigma_tilde for m = 0..|supp(x)| from a single pass over all subsets."""
    v = canonical(x)
    supp = support(v)
    if len(supp) > MAX_BRUTE_SUPPORT:
        return [sigma_tilde(v, m, norm) for m in range(len(supp) + 1)]
    sets = list(subsets_upto(supp, len(supp)))
    vals = _removal_norms(v, sets, norm)
    sizes = np.array([len(s) for s in sets])
    out = []
    for m in range(len(supp) + 1):
        sel = np.flatnonzero(sizes <= m)
        value, A = _pick(vals[sel], [sets[i] for i in sel])
        out.append(FunctionalValue(value, _pad(A, m, supp)))
    return out


def _interval_candidates(L: int, m: int) -> list[IndexInterval]:
    if m == 0:
        return [IndexInterval(1, 0)]
    # every start up to L meets {1..L}; start L+1 stands for all disjoint ones
    return [IndexInterval(s, m) for s in range(1, L + 2)]


def sigma_check(x, m: int, norm: NormOracle) -> FunctionalValue:
    """inf ||x - P_I x|| over intervals I with |I| = m."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    v = canonical(x)
    cands = _interval_candidates(v.shape[0], m)
    vals = _removal_norms(v, [c.indices for c in cands], norm)
    best = vals.min()
    i = int(np.flatnonzero(vals == best)[0])
    return FunctionalValue(float(best), cands[i])


def sigma_check_profile(x, norm: NormOracle, max_m: int | None = None) -> list[FunctionalValue]:
    v = canonical(x)
    top = v.shape[0] if max_m is None else max_m
    return [sigma_check(v, m, norm) for m in range(top + 1)]


# ---------------------------------------------------------------------------
# distance to coordinate spans

def dist_to_span(x, S: Iterable[int], norm: NormOracle, tol: float = 1e-10,
                 max_sweeps: int = 500, starts: Sequence[np.ndarray] = ()) -> SpanFit:
    """inf over scalars (a_n) of ||x - sum_{n in S} a_n e_n||.

    Lattice norms: a_n = e_n^*(x) is optimal.  Polyhedral norms (finitely
    many extreme functionals): solved as a linear program.  Otherwise cyclic
    coordinate descent with golden-section line searches from several starts,
    polished by Powell and Nelder-Mead searches; a descent that does not settle
    within ``max_sweeps`` is flagged.
    """
    S = index_set(S)
    v = canonical(x)
    n = max(v.shape[0], S[-1] if S else 0)
    v = as_vector(v, n)
    idx = np.array([s - 1 for s in S], dtype=int)
    tail = project_out(v, S)
    base = norm(tail)
    if not S or base == 0.0 or norm.monotone:
        return SpanFit(base, S, v[idx].copy() if S else np.zeros(0))
    F = norm.functionals(n) if v.dtype.kind == "f" else None
    if F is not None:
        fit = _span_lp(v, tail, idx, base, F, norm)
        if fit is not None:
            return SpanFit(fit[0], S, fit[1], method="lp")
    value, coeffs, ok = _span_descent(v, tail, idx, base, norm, tol, max_sweeps, starts)
    return SpanFit(value, S, coeffs, flagged=not ok, method="coordinate-descent")


def _span_lp(v, tail, idx, scale, F, norm):
    r = F @ (tail / scale)
    G = F[:, idx]
    k = idx.size
    c = np.zeros(k + 1)
    c[-1] = 1.0
    ones = np.ones((F.shape[0], 1))
    A_ub = np.vstack([np.hstack([-G, -ones]), np.hstack([G, -ones])])
    b_ub = np.concatenate([-r, r])
    bounds = [(None, None)] * k + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    b = res.x[:k] * scale
    resid = tail.copy()
    resid[idx] -= b
    value = norm(resid)
    if value > scale:
        return scale, v[idx].copy()
    return value, v[idx] + b


def _span_descent(v, tail, idx, base, norm, tol, max_sweeps, starts):
    k = idx.size
    e_norms = np.array([norm(np.eye(1, v.shape[0], i)[0]) for i in idx])
    grow = 2.0 ** (1.0 / norm.p)

    def resid(b):
        r = tail.copy()
        r[idx] -= b
        return r

    best_val, best_b, all_ok = base, np.zeros(k), True
    for b0 in [np.zeros(k), *[np.asarray(s, dtype=float) - v[idx] for s in starts]]:
        b = b0.copy()
        cur = norm(resid(b))
        ok = False
        for _ in range(max_sweeps):
            before = cur
            for j in range(k):
                radius = grow * cur / e_norms[j] + 1e-300

                def f(t, j=j):
                    R = np.repeat(resid(b)[None, :], np.size(t), axis=0)
                    R[:, idx[j]] -= np.ravel(t) - b[j]
                    return norm.batch(R).reshape(np.shape(t))

                t, ft = golden_section(f, np.array(b[j] - radius), np.array(b[j] + radius), tol)
                if ft < cur:
                    b[j], cur = float(t), float(ft)
            if before - cur <= tol * max(before, 1e-300):
                ok = True
                break
        all_ok = all_ok and ok
        if cur < best_val:
            best_val, best_b = cur, b.copy()
    if v.dtype.kind == "f" and k > 1:
        # coordinate moves stall at kinks of nonsmooth norms; a direction-set
        # search from the best point escapes along non-axis directions
        def g(b):
            return norm(resid(b))

        polish = (("Powell", {"xtol": tol, "ftol": tol * 1e-2}),
                  ("Nelder-Mead", {"xatol": tol, "fatol": tol * 1e-2, "maxiter": 400 * k, "adaptive": True}))
        for _ in range(20):
            improved = False
            for method, opts in polish:
                res = minimize(g, best_b, method=method, options=opts)
                if res.fun < best_val * (1 - tol):
                    best_val, best_b, improved = float(res.fun), np.asarray(res.x, dtype=float), True
            if not improved:
                break
    return best_val, v[idx] + best_b, all_ok


def sigma_hathat(x, m: int, norm: NormOracle, order: Sequence[int] | None = None) -> FunctionalValue:
    """inf over A inside the first m basis positions and scalars a_n of ||x - sum a_n e_n||.

    ``order`` lists basis positions in the order of a reordered basis (its
    first m entries are the admissible positions); default is 1, 2, 3, ...
    The span over all m positions contains every smaller span, so a single
    distance computation gives the infimum; the witness is the support of the
    optimal coefficients, paired with those coefficients.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if order is None:
        S = tuple(range(1, m + 1))
    else:
        if len(order) < m:
            raise ValueError("order is shorter than m")
        S = index_set(order[:m])
    fit = dist_to_span(x, S, norm)
    nz = [(s, float(a)) for s, a in zip(fit.indices, np.ravel(fit.coeffs)) if a != 0]
    witness = (tuple(s for s, _ in nz), tuple(a for _, a in nz))
    return FunctionalValue(fit.value, witness, flagged=fit.flagged, note=fit.method)


def best_prefix_tail(x, m: int, norm: NormOracle) -> FunctionalValue:
    """min over 0 <= n <= m of ||x - S_n x||, witness the smallest argmin n."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    v = canonical(x)
    top = min(m, v.shape[0])
    X = np.array([v - partial_sum(v, n) for n in range(top + 1)]).reshape(top + 1, v.shape[0])
    vals = norm.batch(X) if v.shape[0] else np.zeros(top + 1)
    i = int(np.flatnonzero(vals == vals.min())[0])
    return FunctionalValue(float(vals[i]), i)


def min_sigma(x, m: int, which: str, norm: NormOracle) -> FunctionalValue:
    """min over 0 <= k <= m of sigma_tilde_k or sigma_check_k, witness (k, inner witness)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if which == "tilde":
        vals = [sigma_tilde(x, k, norm) for k in range(m + 1)]
    elif which == "check":
        vals = [sigma_check(x, k, norm) for k in range(m + 1)]
    else:
        raise ValueError(f"which must be 'tilde' or 'check', got {which!r}")
    k = min(range(m + 1), key=lambda i: (vals[i].value, i))
    return FunctionalValue(vals[k].value, (k, vals[k].witness), flagged=any(v.flagged for v in vals))


# ---------------------------------------------------------------------------
# one-dimensional searches

def golden_section(f: Callable[[np.ndarray], np.ndarray], lo, hi, tol: float = 1e-10,
                   max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized golden-section search for minima of unimodal functions.

    ``f`` maps an array of abscissae to an array of values of the same shape;
    ``lo`` and ``hi`` are arrays of brackets, all searched together.
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    stop = tol * np.maximum(1.0, np.abs(b - a))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= stop):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fnew = f(new)
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    t = 0.5 * (a + b)
    return t, f(t)


def _line_minimize(v: np.ndarray, D: np.ndarray, norm: NormOracle, tol: float = 1e-10):
    """min over t of ||v - t d|| for each row d of D; returns (t, values, flagged)."""
    K = D.shape[0]
    if K == 0:
        return np.zeros(0), np.zeros(0), False
    x_norm = norm(v)
    d_norms = norm.batch(D)
    radius = np.where(d_norms > 0, 2.0 ** (1.0 / norm.p) * x_norm / np.where(d_norms > 0, d_norms, 1.0), 0.0)

    def f(T):
        T = np.asarray(T)
        return norm.batch(v[None, :] - T.reshape(K, -1)[:, :, None] * D[:, None, :]).reshape(T.shape)

    flagged = False
    if norm.p < 1:
        # quasi-norms need not be unimodal along a line: grid, then refine one cell
        flagged = True
        grid = np.linspace(-1.0, 1.0, 401)
        T = radius[:, None] * grid[None, :]
        vals = f(T)
        j = vals.argmin(axis=1)
        step = radius * (grid[1] - grid[0])
        centre = T[np.arange(K), j]
        t, ft = golden_section(lambda s: f(s.reshape(K, 1)).ravel(), centre - step, centre + step, tol)
    else:
        t, ft = golden_section(lambda s: f(s.reshape(K, 1)).ravel(), -radius, radius, tol)
    # kinks t = x_k / d_k: exact minimizers for piecewise-linear norms such as l1
    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = np.where(D != 0, v[None, :] / np.where(D != 0, D, 1), 0.0)
    kinks = np.real(kinks) if not np.iscomplexobj(D) and not np.iscomplexobj(v) else kinks
    if not np.iscomplexobj(kinks):
        kv = f(kinks)
        j = kv.argmin(axis=1)
        kbest = kv[np.arange(K), j]
        use = kbest <= ft
        t = np.where(use, kinks[np.arange(K), j], t)
        ft = np.where(use, kbest, ft)
    zero = ft > x_norm
    return np.where(zero, 0.0, t), np.where(zero, x_norm, ft), flagged


def dist_to_sign_line(x, B: Iterable[int], signs, norm: NormOracle, tol: float = 1e-10) -> LineFit:
    """min over real t of ||x - t 1_{eps B}||.

    Closed form (least squares) in l2; golden section otherwise.
    """
    from .tga import indicator

    B = index_set(B)
    v = canonical(x)
    if not B:
        return LineFit(0.0, norm(v))
    d = indicator(B, signs)
    n = max(v.shape[0], d.shape[0])
    v, d = as_vector(v, n), as_vector(d, n)
    if getattr(norm, "kind", "") == "lp" and getattr(norm, "exponent", None) == 2 and v.dtype.kind == "f":
        t = float(np.real(np.vdot(d, v)) / np.real(np.vdot(d, d)))
        return LineFit(t, norm(v - t * d))
    t, val, flagged = _line_minimize(v, d[None, :], norm, tol)
    return LineFit(float(t[0]), float(val[0]), flagged)


def dist_to_interval_line(x, m: int, A: Iterable[int], norm: NormOracle,
                          tol: float = 1e-10) -> FunctionalValue:
    """inf ||x - t 1_I|| over real t and intervals I with I < A or A < I and
    |I cap supp(x)| <= m.

    Intervals inside {1..L+1} are enumerated (L the last support index), the
    empty interval included; any longer interval past L+1 adds only exterior
    mass beyond an already enumerated one.
    """
    A = index_set(A)
    if not is_greedy_set(x, A, m):
        raise ValueError(f"{A} is not in G(x, {m})")
    v = canonical(x)
    L = v.shape[0]
    supp = np.zeros(L + 2, dtype=int)
    supp[1:L + 1] = v != 0
    csum = np.cumsum(supp)
    lo_a = A[0] if A else L + 2
    hi_a = A[-1] if A else 0
    cands = []
    for a in range(1, L + 2):
        for b in range(a, L + 2):
            if not (b < lo_a or a > hi_a):
                continue
            if csum[b] - csum[a - 1] > m:
                break
            cands.append((a, b))
    n = L + 1
    vv = as_vector(v, n)
    D = np.zeros((len(cands), n))
    for r, (a, b) in enumerate(cands):
        D[r, a - 1:b] = 1.0
    t, vals, flagged = _line_minimize(vv, D, norm, tol)
    best_val = norm(vv) if v.size else 0.0
    best = (IndexInterval(1, 0), 0.0)
    if vals.size and vals.min() < best_val:
        i = int(np.flatnonzero(vals == vals.min())[0])
        best_val = float(vals[i])
        best = (IndexInterval(cands[i][0], cands[i][1] - cands[i][0] + 1), float(t[i]))
    return FunctionalValue(float(best_val), best, flagged=flagged)


def sign_line_distances(x, norm: NormOracle, max_card: int, window: int | None = None,
                        field: str = "real", tol: float = 1e-10) -> dict[tuple[int, ...], LineFit]:
    """For every B inside {1..window} with |B| <= max_card: min over signs and t
    of ||x - t 1_{eps B}||.

    Signs are taken modulo a global unit factor (t absorbs it), so the first
    sign of each pattern is fixed to 1.
    """
    from .spaces import unit_signs

    v = canonical(x)
    n = max(v.shape[0], window or 0)
    v = as_vector(v, n)
    units = unit_signs(field)
    rows, keys = [], []
    for size in range(1, max_card + 1):
        for B in itertools.combinations(range(1, n + 1), size):
            for tail in itertools.product(units, repeat=size - 1):
                d = np.zeros(n, dtype=units.dtype)
                d[[b - 1 for b in B]] = (1.0,) + tail
                rows.append(d)
                keys.append(B)
    out: dict[tuple[int, ...], LineFit] = {(): LineFit(0.0, norm(v))}
    if not rows:
        return out
    t, vals, flagged = _line_minimize(v.astype(units.dtype), np.array(rows), norm, tol)
    for key, ti, vi in zip(keys, t, vals):
        cur = out.get(key)
        if cur is None or vi < cur.value:
            out[key] = LineFit(float(ti), float(vi), flagged)
    return out
