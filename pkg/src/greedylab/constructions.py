"""Executable constructions.

* :func:`build_e1` -- a vector whose best interval error is large while its
  best m-term projection error is 1 (canonical basis of l1).
* :func:`build_mixed_instance` -- l_p x l_q interleaved along a sparse spine:
  1-unconditional, not partially democratic, yet projections on greedy sets
  are controlled by projections on disjoint intervals of the same length.
* :func:`search_t3_witness` / :func:`assemble_t3` -- blocks of non-greedy
  witnesses glued into one vector and a blockwise reordering under which the
  greedy error is unbounded against the best prefix-supported approximation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import functionals as fn
from .constants import (SampleFamily, estimate_democracy, estimate_unconditionality,
                        partial_democracy_witness)
from .spaces import MixedNorm, NormOracle, as_vector, canonical, spine_sequence, spine_upto, support
from .tga import greedy_sets, index_set, is_greedy_set, partial_sum, project, project_out

__all__ = [
    "E1Instance", "build_e1", "MixedInstance", "build_mixed_instance",
    "IntervalCheck", "verify_intervals_plus_1dim",
    "T3Witness", "T3Assembly", "WitnessRejected", "search_t3_witness", "assemble_t3",
]


# ---------------------------------------------------------------------------
# Example E1

@dataclass(frozen=True)
class E1Instance:
    C: float
    m: int
    a: float
    x: np.ndarray

    @property
    def a_positions(self) -> tuple[int, ...]:
        return tuple(1 + k * (self.m + 1) for k in range(self.m))


def build_e1(C: float, m: int = 3) -> E1Instance:
    """m blocks of (a, 1/m^2 repeated m times) with a = (C + 1)/(m - 1)."""
    if not C > 1:
        raise ValueError(f"C must exceed 1, got {C}")
    if m < 2:
        raise ValueError("m must be at least 2")
    a = (C + 1) / (m - 1)
    block = [a] + [1.0 / m**2] * m
    return E1Instance(C, m, a, np.array(block * m))


# ---------------------------------------------------------------------------
# mixed l_p x l_q instance

@dataclass
class IntervalCheck:
    passed: bool
    worst_ratio: float
    witness: dict | None
    samples: int


@dataclass
class MixedInstance:
    norm: MixedNorm
    spine: tuple[int, ...]
    report: dict = field(default_factory=dict)


def build_mixed_instance(p: float = 1.0, q: float = 2.0, window: int = 64, n: int = 4,
                         interval_samples: int = 0, C: float | None = None, seed: int = 0) -> MixedInstance:
    """Mixed oracle on the spine positions plus a verification report."""
    s = spine_sequence(p, q, 2)
    if window < s[1]:
        raise ValueError(f"window {window} smaller than s_2 = {s[1]}")
    norm = MixedNorm(p, q)
    spine = spine_upto(p, q, window)
    report: dict = {"spine": list(spine),
                    "spine_conditions": all(sk > (k + 1) ** (q / p) for k, sk in enumerate(spine, 1))
                    and all(b >= 1 + 2 * a for a, b in zip(spine, spine[1:]))}
    fam = SampleFamily(dim=min(window, 12), kind="random", count=200, seed=seed)
    report["unconditionality"] = estimate_unconditionality(norm, fam, shrink_samples=64, max_signs=256).value
    if len(spine) >= n:
        off = [k for k in range(1, window + 1) if k not in spine][:n]
        est = estimate_democracy(norm, n, "plain", window=tuple(spine[:n]) + tuple(off))
        report["democracy_spine_vs_offspine"] = est.value
        wit = partial_democracy_witness(norm, n, window, A=spine[:n])
        report["partial_democracy"] = None if wit is None else {
            "A": list(wit.A), "min_ratio": wit.min_ratio, "inconclusive": wit.inconclusive,
            "rows": wit.rows}
    if interval_samples:
        bound = C if C is not None else 2.0 ** (1 + 1 / p)
        chk = verify_intervals_plus_1dim(norm, window, interval_samples, bound, seed=seed)
        report["intervals_plus_1dim"] = {"C": bound, "passed": chk.passed, "worst_ratio": chk.worst_ratio,
                                         "samples": chk.samples, "witness": chk.witness}
    return MixedInstance(norm, spine, report)


def _random_greedy_set(x: np.ndarray, m: int, rng: np.random.Generator) -> tuple[int, ...]:
    """A uniformly chosen member of G(x, m), m <= |supp(x)|."""
    mod = np.abs(x)
    thr = np.sort(mod)[::-1][m - 1]
    strict = np.flatnonzero(mod > thr)
    ties = np.flatnonzero(mod == thr)
    pick = rng.choice(ties, size=m - strict.size, replace=False)
    return index_set(np.concatenate([strict, pick]) + 1)


def _sample_triple(rng: np.random.Generator, window: int, spine_mask: np.ndarray | None):
    """One (x, m, A, I, y) draw; x mixes spine-heavy and off-spine-heavy profiles."""
    x = np.zeros(window)
    k = int(rng.integers(1, min(window, 24) + 1))
    pos = rng.choice(window, size=k, replace=False)
    vals = rng.choice(np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]), size=k) if rng.random() < 0.5 \
        else rng.normal(size=k)
    x[pos] = vals
    if spine_mask is not None and rng.random() < 0.5:
        sp = np.flatnonzero(spine_mask)
        boost = rng.choice(sp, size=int(rng.integers(1, sp.size + 1)), replace=False)
        x[boost] = rng.choice([-1.0, 1.0], size=boost.size) * rng.choice([1.0, 2.0, 4.0])
    if rng.random() < 0.3:
        # long flat off-spine runs stress the l_q factor
        a = int(rng.integers(0, window))
        b = int(rng.integers(a, window))
        run = np.arange(a, b + 1)
        if spine_mask is not None:
            run = run[~spine_mask[run]]
        x[run] = rng.choice([-1.0, 1.0]) * 0.5
    supp = np.flatnonzero(x)
    if supp.size == 0:
        x[0] = 1.0
        supp = np.flatnonzero(x)
    m = int(rng.integers(1, min(supp.size, 16) + 1))
    A = _random_greedy_set(x, m, rng)
    Aset = set(A)
    starts = [st for st in range(1, window - m + 2) if not Aset & set(range(st, st + m))]
    if not starts:
        return None
    st = starts[int(rng.integers(len(starts)))]
    I = tuple(range(st, st + m))
    mode = rng.random()
    if mode < 0.4:
        y = project(x, I)
    elif mode < 0.7:
        y = project(x, I) + rng.choice([-0.5, 0.0, 0.5], size=window) * np.isin(np.arange(1, window + 1), I)
    else:
        y = np.zeros(window)
        y[st - 1:st - 1 + m] = rng.choice(np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]), size=m)
    return x, m, A, I, y


def verify_intervals_plus_1dim(norm: NormOracle, window: int, samples: int, C: float,
                               seed: int = 0) -> IntervalCheck:
    """Check ||x - P_A x|| <= C ||x - y|| on ``samples`` seeded triples: A in
    G(x, m), I an interval with |I| = m disjoint from A, supp(y) inside I.
    Draws admitting no such interval are discarded and redrawn."""
    spine_mask = norm.spine_mask(window) if isinstance(norm, MixedNorm) else None
    worst, witness, done, i = 0.0, None, 0, -1
    while done < samples:
        i += 1
        if i > 20 * samples + 100:
            raise RuntimeError("could not draw enough admissible triples")
        rng = np.random.default_rng([seed, i, 43])
        draw = _sample_triple(rng, window, spine_mask)
        if draw is None:
            continue
        x, m, A, I, y = draw
        done += 1
        num = norm(project_out(x, A))
        den = norm(x - y)
        if num < 1e-13:
            continue
        ratio = math.inf if den < 1e-13 else num / den
        if ratio > worst:
            worst = ratio
            witness = {"sample": i, "x": x.tolist(), "m": m, "A": list(A), "I": list(I), "y": y.tolist(),
                       "numerator": num, "denominator": den}
    return IntervalCheck(worst <= C, worst, witness, done)


# ---------------------------------------------------------------------------
# block / reordering assembly

class WitnessRejected(ValueError):
    pass


@dataclass(frozen=True)
class T3Witness:
    """y with supp(y) = {offset+1, ..., offset+l}, A in G(y, m), |supp(z)| = m,
    and ||y - P_A y|| > 2^k ||y - z||."""

    y: np.ndarray
    m: int
    A: tuple[int, ...]
    z: np.ndarray
    k: int
    offset: int = 0

    @property
    def l(self) -> int:
        return len(support(self.y))

    def gap(self, norm: NormOracle) -> tuple[float, float]:
        n = max(len(self.y), len(self.z))
        return norm(project_out(self.y, self.A)), norm(as_vector(self.y, n) - as_vector(self.z, n))

    def validate(self, norm: NormOracle) -> None:
        supp = support(self.y)
        if len(support(self.z)) != self.m:
            raise WitnessRejected(f"|supp(z)| = {len(support(self.z))} differs from m = {self.m}")
        if supp != tuple(range(self.offset + 1, self.offset + len(supp) + 1)):
            raise WitnessRejected("supp(y) is not an interval starting right after the offset")
        if not 1 <= self.m < len(supp):
            raise WitnessRejected("need 1 <= m < l")
        if not set(support(self.z)) <= set(range(self.offset + 1, self.offset + len(supp) + 1)):
            raise WitnessRejected("supp(z) leaves the block of y")
        if not is_greedy_set(self.y, self.A, self.m):
            raise WitnessRejected("A is not an m-greedy set of y")
        num, den = self.gap(norm)
        if not num > 2.0**self.k * den:
            raise WitnessRejected(f"gap {num} <= 2^{self.k} * {den}")


def _shift(v: np.ndarray, offset: int) -> np.ndarray:
    return np.concatenate([np.zeros(offset), v])


def _alternating_candidates(k: int, offset: int, budget: int):
    for n in range(1, budget + 1):
        y = np.tile([1.0, -1.0], n)
        A = tuple(offset + 1 + 2 * j for j in range(n))
        for c in (1.0 / n, 0.5 / n, 1.0):
            z = np.zeros(2 * n)
            z[0::2] = c
            yield _shift(y, offset), n, A, _shift(z, offset)


def _grid_candidates(offset: int, max_len: int = 5):
    vals = (1.0, -1.0, 0.5, -0.5)
    import itertools

    for l in range(2, max_len + 1):
        for y in itertools.product(vals, repeat=l):
            y = np.array(y)
            for m in range(1, l):
                for A in greedy_sets(y, m):
                    for D in itertools.combinations(range(1, l + 1), m):
                        for c in (1.0, 0.5):
                            z = c * project(y, D)
                            yield _shift(y, offset), m, tuple(a + offset for a in A), _shift(z, offset)


def search_t3_witness(norm: NormOracle, k: int, budget: int = 200, offset: int = 0) -> T3Witness | None:
    """Search structured candidates for a witness with gap 2^k.

    Candidates: alternating vectors (1, -1, ..., 1, -1) of growing length with
    A the positive positions and z supported on A, then short grid vectors
    with z a scaled projection; at most ``budget`` alternating lengths and
    ``budget`` * 100 grid candidates are tried.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    tried = 0
    for source in (_alternating_candidates(k, offset, budget), _grid_candidates(offset)):
        for y, m, A, z in source:
            tried += 1
            if tried > budget * 100:
                return None
            w = T3Witness(y, m, A, z, k, offset)
            num, den = w.gap(norm)
            if num > 2.0**k * den and len(support(z)) == m:
                return w
    return None


@dataclass
class T3Assembly:
    x: np.ndarray
    blocks: list[dict]
    s: list[int]
    B: dict[int, tuple[int, ...]]
    pi: list[int]
    levels: list[dict]
    valid: bool
    failure: str | None = None
    failure_level: int | None = None

    def to_json(self) -> str:
        return json.dumps({
            "valid": self.valid, "failure": self.failure, "failure_level": self.failure_level,
            "x": self.x.tolist(), "s": self.s,
            "blocks": self.blocks, "B": {str(k): list(v) for k, v in self.B.items()},
            "pi": self.pi, "levels": self.levels}, indent=1)


def _scale_exponent(wit: T3Witness, norm: NormOracle, k: int, prev_min: float | None,
                    prev_gaps: list[float]) -> int:
    """Smallest e >= 0 such that 2^-e y satisfies the size and coefficient conditions."""
    ny = norm(wit.y)
    top = float(np.abs(wit.y).max())

    def ok(e):
        lam = 2.0**-e
        if not lam * ny <= 2.0**-k:
            return False
        if prev_gaps and not lam * ny < 2.0**-k * min(prev_gaps):
            return False
        return prev_min is None or lam * top < prev_min

    e = 0
    while not ok(e):
        e += 1
        if e > 1000:
            raise OverflowError("scaling underflow")
    return e


def assemble_t3(norm: NormOracle, depth: int,
                source: Callable[[int, int], T3Witness | None] | None = None,
                budget: int = 200) -> T3Assembly:
    """Glue witnesses y_1, ..., y_{depth+1} and verify levels i = 1..depth.

    ``source(k, offset)`` returns a witness of gap 2^k supported right after
    ``offset``; by default :func:`search_t3_witness` is used.  Witnesses are
    rescaled by powers of two (exact in floating point).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > 30:
        raise ValueError("depth capped at 30 by floating-point range")
    if source is None:
        def source(k, offset):
            return search_t3_witness(norm, k, budget, offset)

    ys, zs, blocks, s = [], [], [], [0]
    gaps: list[float] = []
    prev_min = None
    failure = None
    for k in range(1, depth + 2):
        wit = source(k, s[-1])
        if wit is None:
            failure = (f"no witness for level {k}", k)
            break
        try:
            if wit.offset != s[-1]:
                raise WitnessRejected(f"witness offset {wit.offset} != {s[-1]}")
            wit.validate(norm)
        except WitnessRejected as exc:
            failure = (f"witness rejected at level {k}: {exc}", k)
            break
        e = _scale_exponent(wit, norm, k, prev_min, gaps)
        lam = 2.0**-e
        y, z = lam * canonical(wit.y), lam * canonical(wit.z)
        ys.append(y)
        zs.append(z)
        num, den = norm(project_out(y, wit.A)), norm(as_vector(y, max(len(y), len(z))) - as_vector(z, max(len(y), len(z))))
        gaps.append(den)
        supp = support(y)
        prev_min = float(np.abs(y[np.array(supp) - 1]).min())
        blocks.append({"k": k, "m": wit.m, "l": len(supp), "A": list(wit.A), "scale_exponent": e,
                       "y": y.tolist(), "z": z.tolist(), "gap_numerator": num, "gap_denominator": den})
        s.append(s[-1] + len(supp))
    total = s[-1]
    x = np.zeros(total)
    for y in ys:
        x[: len(y)] += as_vector(y, total)[: len(y)] if len(y) <= total else y[:total]
    asm = T3Assembly(x, blocks, s, {}, [], [], valid=failure is None)
    if failure:
        asm.failure, asm.failure_level = failure
        if len(ys) < 2:
            return asm
    _verify_blocks(asm, norm, ys, zs)
    _build_pi(asm, zs)
    _verify_levels(asm, norm, ys, zs)
    return asm


def _fail(asm: T3Assembly, what: str, level: int):
    if asm.valid:
        asm.valid, asm.failure, asm.failure_level = False, what, level


def _verify_blocks(asm, norm, ys, zs):
    s = asm.s
    for k, (blk, y) in enumerate(zip(asm.blocks, ys), 1):
        checks = {
            "consecutive_support": support(y) == tuple(range(s[k - 1] + 1, s[k] + 1)),
            "m_below_l": 1 <= blk["m"] < blk["l"],
            "A_greedy": is_greedy_set(y, blk["A"], blk["m"]),
            "norm_bound": norm(y) <= 2.0**-k,
            "gap": blk["gap_numerator"] > 2.0**k * blk["gap_denominator"],
            "z_support_size": len(support(zs[k - 1])) == blk["m"],
        }
        if k >= 2:
            prev = ys[k - 2]
            checks["norm_below_previous_gaps"] = bool(
                norm(y) < 2.0**-k * min(b["gap_denominator"] for b in asm.blocks[: k - 1]))
            checks["coefficient_separation"] = bool(
                np.abs(y).max() < np.abs(prev[np.array(support(prev)) - 1]).min())
        blk["checks"] = checks
        for name, good in checks.items():
            if not good:
                _fail(asm, f"block {k}: {name}", k)


def _build_pi(asm, zs):
    """pi(n) lists the original position occupying slot n of the reordered basis."""
    pi: list[int] = []
    for j in range(1, len(asm.s)):
        block = list(range(asm.s[j - 1] + 1, asm.s[j] + 1))
        zsupp = list(support(zs[j - 1])) if j - 1 < len(zs) else []
        pi.extend(zsupp + [n for n in block if n not in set(zsupp)])
    asm.pi = pi


def _verify_levels(asm, norm, ys, zs):
    x, s, pi = asm.x, asm.s, asm.pi
    total = len(x)
    inv = {orig: slot for slot, orig in enumerate(pi, 1)}
    x_pi = np.array([x[o - 1] for o in pi])
    for i in range(1, len(ys)):
        m_next = asm.blocks[i]["m"]
        A_next = tuple(asm.blocks[i]["A"])
        B = index_set(tuple(range(1, s[i] + 1)) + A_next)
        asm.B[i + 1] = B
        M = s[i] + m_next
        y1 = as_vector(ys[i], total)
        z1 = as_vector(zs[i], total)
        gap = norm(y1 - z1)
        resid = norm(project_out(x, B))
        approx = partial_sum(x, s[i]) + z1
        upper = norm(x - approx)
        lvl = {"i": i, "s_i": s[i], "m_next": m_next, "M": M, "B_size": len(B),
               "residual": resid, "gap": gap, "upper": upper}
        checks = {
            "supp_u": support(sum(as_vector(y, total) for y in ys[:i])) == tuple(range(1, s[i] + 1)),
            "B_in_supp_u_next": set(B) <= set(range(1, s[i + 1] + 1)),
            "greedy_B": is_greedy_set(x, B, M),
            "greedy_B_pi": is_greedy_set(x_pi, [inv[b] for b in B], M),
            "partial_sums_agree": sorted(pi[: s[i]]) == list(range(1, s[i] + 1)),
            "approx_support_pi": sorted(inv[n] for n in support(approx)) == list(range(1, M + 1)),
            "residual_bound": resid >= 2.0**i * gap,
            "approx_bound": upper < 2.0 * gap,
        }
        hh = fn.sigma_hathat(x, M, norm, order=pi)
        lvl["sigma_hathat"] = hh.value
        lvl["sigma_hathat_flagged"] = hh.flagged
        checks["sigma_hathat_le_upper"] = hh.value <= upper * (1 + 1e-9)
        m_cur = asm.blocks[i - 1]["m"]
        alt = fn.sigma_hathat(x, s[i] + m_cur, norm, order=pi)
        lvl["sigma_hathat_alt_index"] = s[i] + m_cur
        lvl["sigma_hathat_alt"] = alt.value
        lvl["ratio"] = resid / hh.value if hh.value > 0 else math.inf
        lvl["ratio_alt"] = resid / alt.value if alt.value > 0 else math.inf
        if i >= 2:
            checks["final"] = resid > 2.0 ** (i - 1) * hh.value and resid > 2.0 ** (i - 1) * upper
        lvl["checks"] = checks
        asm.levels.append(lvl)
        for name, good in checks.items():
            if not good:
                _fail(asm, f"level {i}: {name}", i)
