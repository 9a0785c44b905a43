"""Norm oracles on finitely supported sequences.

A coefficient vector is a 1-D numpy array ``x`` where ``x[n - 1]`` is the
coordinate of the n-th basis vector; positions past the end of the array are
zero, so every oracle here gives the same value after trailing zero padding.
Index sets are sorted tuples of 1-based positions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SpaceParams", "space_constants", "unit_signs",
    "NormOracle", "LpNorm", "WeightedNorm", "MixedNorm", "IntervalSummingNorm",
    "SummingNorm", "MaxNorm", "CallableNorm",
    "norm_lp", "norm_mixed", "norm_interval_summing", "norm_summing",
    "spine_sequence", "spine_upto", "parse_space",
    "as_vector", "canonical", "support", "parse_vectors", "format_vector",
    "p_triangle_gap", "aabw_check",
]


@dataclass(frozen=True)
class SpaceParams:
    p: float
    field: str
    A_p: float
    B_p: float


def space_constants(p: float, field: str = "real") -> SpaceParams:
    """Convexity constants of a p-Banach space.

    ``A_p = (2**p - 1)**(-1/p)``; ``B_p`` is ``2**(1/p) * A_p`` over the
    reals and ``4**(1/p) * A_p`` over the complex field.
    """
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if field not in ("real", "complex"):
        raise ValueError(f"unknown field {field!r}")
    a_p = 1.0 if p == 1 else (2.0**p - 1.0) ** (-1.0 / p)
    base = 2.0 if field == "real" else 4.0
    return SpaceParams(p=p, field=field, A_p=a_p, B_p=base ** (1.0 / p) * a_p)


def unit_signs(field: str = "real") -> np.ndarray:
    """Unit scalars used for sign suprema: {1, -1}, or 8 points of the circle."""
    if field == "real":
        return np.array([1.0, -1.0])
    if field == "complex":
        return np.exp(2j * np.pi * np.arange(8) / 8)
    raise ValueError(f"unknown field {field!r}")


# ---------------------------------------------------------------------------
# vectors

def as_vector(x, length: int | None = None) -> np.ndarray:
    """Coerce to a 1-D coefficient array, zero padded to ``length`` if given."""
    v = np.asarray(x)
    if v.dtype.kind not in "fc":
        v = v.astype(float)
    if v.ndim != 1:
        raise ValueError("coefficient vectors are one-dimensional")
    if length is not None and length > v.shape[0]:
        v = np.concatenate([v, np.zeros(length - v.shape[0], dtype=v.dtype)])
    return v


def canonical(x) -> np.ndarray:
    """Strip trailing zeros."""
    v = as_vector(x)
    nz = np.flatnonzero(v)
    return v[: nz[-1] + 1].copy() if nz.size else v[:0].copy()


def support(x) -> tuple[int, ...]:
    return tuple(int(n) + 1 for n in np.flatnonzero(as_vector(x)))


def parse_vectors(text: str) -> list[np.ndarray]:
    """Parse the vector text format: one vector per line, position 1 first.

    Blank lines and ``#`` comments are skipped.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"line {lineno}: non-finite coefficient")
        out.append(canonical(np.array(vals, dtype=float)))
    return out


def format_vector(x) -> str:
    v = canonical(x)
    return " ".join(repr(float(c)) for c in v) if v.size else "0"


# ---------------------------------------------------------------------------
# oracles

class NormOracle:
    """Quasi-norm on finitely supported sequences.

    Subclasses implement ``batch``, which evaluates the norm along the last
    axis of an array of any shape.  ``p`` is the declared p-convexity exponent.
    ``monotone`` marks lattice norms (|u| <= |v| coordinatewise implies
    ||u|| <= ||v||); ``symmetric`` marks norms that are also invariant under
    permutations of coordinates.
    """

    kind = "abstract"
    p: float = 1.0
    monotone = False
    symmetric = False

    def batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        v = as_vector(x)
        if v.shape[0] == 0:
            return 0.0
        return float(self.batch(v[None, :])[0])

    def functionals(self, n: int) -> np.ndarray | None:
        """Rows f_i with ||x|| = max_i |<f_i, x>| on length-n vectors, if polyhedral."""
        return None

    def describe(self) -> str:
        return self.kind


def _lp_batch(X: np.ndarray, p: float) -> np.ndarray:
    A = np.abs(X)
    if math.isinf(p):
        return A.max(axis=-1, initial=0.0)
    if p == 1:
        return A.sum(axis=-1)
    if p == 2:
        return np.sqrt((A * A).sum(axis=-1))
    return (A**p).sum(axis=-1) ** (1.0 / p)


@dataclass(frozen=True)
class LpNorm(NormOracle):
    exponent: float = 1.0
    kind = "lp"
    monotone = True
    symmetric = True

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError(f"lp exponent must be positive, got {self.exponent}")

    @property
    def p(self) -> float:
        return min(self.exponent, 1.0)

    def batch(self, X):
        return _lp_batch(np.asarray(X), self.exponent)

    def functionals(self, n):
        if math.isinf(self.exponent):
            return np.eye(n)
        return None

    def describe(self):
        return f"lp:{self.exponent:g}"


@dataclass(frozen=True)
class WeightedNorm(NormOracle):
    """(sum w_n |x_n|^exponent)^(1/exponent); the last weight repeats."""

    weights: tuple[float, ...] = (1.0,)
    exponent: float = 1.0
    kind = "weighted"
    monotone = True

    def __post_init__(self):
        if not self.weights or min(self.weights) <= 0:
            raise ValueError("weights must be positive")
        if not self.exponent > 0 or math.isinf(self.exponent):
            raise ValueError("weighted exponent must be finite and positive")

    @property
    def p(self):
        return min(self.exponent, 1.0)

    def weight_vector(self, n: int) -> np.ndarray:
        w = np.full(n, self.weights[-1], dtype=float)
        k = min(n, len(self.weights))
        w[:k] = self.weights[:k]
        return w

    def batch(self, X):
        X = np.asarray(X)
        w = self.weight_vector(X.shape[-1])
        return ((np.abs(X) ** self.exponent) * w).sum(axis=-1) ** (1.0 / self.exponent)

    def describe(self):
        return "weighted:{:g}:{}".format(self.exponent, ",".join(f"{w:g}" for w in self.weights))


def spine_sequence(p: float, q: float, count: int) -> tuple[int, ...]:
    """Least integers with s_k > (k+1)^(q/p) and s_{k+1} >= 1 + 2 s_k."""
    if not 1 <= p < q < math.inf:
        raise ValueError(f"need 1 <= p < q < inf, got p={p}, q={q}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    out: list[int] = []
    for k in range(1, count + 1):
        bound = (k + 1) ** (q / p)
        s = math.floor(bound) + 1
        if out:
            s = max(s, 1 + 2 * out[-1])
        out.append(s)
    return tuple(out)


def spine_upto(p: float, q: float, n: int) -> tuple[int, ...]:
    """Spine positions that are <= n."""
    count = 1
    while spine_sequence(p, q, count)[-1] <= n:
        count += 1
    return spine_sequence(p, q, count - 1)


@dataclass(frozen=True)
class MixedNorm(NormOracle):
    """max(||z||_p, ||y||_q), spine positions feeding z and the rest feeding y."""

    p_exp: float = 1.0
    q_exp: float = 2.0
    kind = "mixed_pq"
    monotone = True

    def __post_init__(self):
        spine_sequence(self.p_exp, self.q_exp, 0)

    @property
    def p(self):
        return 1.0

    def spine_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        for s in spine_upto(self.p_exp, self.q_exp, n):
            mask[s - 1] = True
        return mask

    def batch(self, X):
        X = np.asarray(X)
        mask = self.spine_mask(X.shape[-1])
        return np.maximum(_lp_batch(X[..., mask], self.p_exp), _lp_batch(X[..., ~mask], self.q_exp))

    def describe(self):
        return f"mixed:{self.p_exp:g},{self.q_exp:g}"


@dataclass(frozen=True)
class IntervalSummingNorm(NormOracle):
    """max(||x||_base, sup_I |sum_{k in I} x_k| / |I|^(1/2)).

    For base 2 the interval term never exceeds the l2 term (Cauchy-Schwarz),
    so that instance is plain l2; base > 2 gives a conditional basis.
    """

    base: float = math.inf
    kind = "interval_summing"

    def __post_init__(self):
        if not self.base >= 1:
            raise ValueError("base exponent must be >= 1")

    @property
    def p(self):
        return 1.0

    def batch(self, X):
        X = np.asarray(X)
        n = X.shape[-1]
        c = np.concatenate([np.zeros(X.shape[:-1] + (1,), dtype=X.dtype), np.cumsum(X, axis=-1)], axis=-1)
        best = np.zeros(X.shape[:-1])
        for length in range(1, n + 1):
            sums = np.abs(c[..., length:] - c[..., :-length]).max(axis=-1)
            best = np.maximum(best, sums / math.sqrt(length))
        return np.maximum(_lp_batch(X, self.base), best)

    def functionals(self, n):
        if not math.isinf(self.base):
            return None
        rows = [np.eye(n)]
        for length in range(1, n + 1):
            F = np.zeros((n - length + 1, n))
            for st in range(n - length + 1):
                F[st, st:st + length] = 1.0 / math.sqrt(length)
            rows.append(F)
        return np.vstack(rows)

    def describe(self):
        return f"interval:{self.base:g}"


@dataclass(frozen=True)
class SummingNorm(NormOracle):
    """max(||x||_inf, sup_n |x_1 + ... + x_n|)."""

    kind = "summing"

    @property
    def p(self):
        return 1.0

    def batch(self, X):
        X = np.asarray(X)
        return np.maximum(np.abs(X).max(axis=-1, initial=0.0),
                          np.abs(np.cumsum(X, axis=-1)).max(axis=-1, initial=0.0))

    def functionals(self, n):
        return np.vstack([np.eye(n), np.tril(np.ones((n, n)))])

    def describe(self):
        return "summing"


@dataclass(frozen=True)
class MaxNorm(NormOracle):
    """Pointwise maximum of other oracles."""

    parts: tuple[NormOracle, ...] = ()
    kind = "user-composed"

    def __post_init__(self):
        if not self.parts:
            raise ValueError("MaxNorm needs at least one part")

    @property
    def p(self):
        return min(part.p for part in self.parts)

    @property
    def monotone(self):
        return all(part.monotone for part in self.parts)

    @property
    def symmetric(self):
        return all(part.symmetric for part in self.parts)

    def batch(self, X):
        return np.max([part.batch(X) for part in self.parts], axis=0)

    def functionals(self, n):
        rows = [part.functionals(n) for part in self.parts]
        if any(r is None for r in rows):
            return None
        return np.vstack(rows)

    def describe(self):
        return "max(" + ";".join(part.describe() for part in self.parts) + ")"


@dataclass(frozen=True)
class CallableNorm(NormOracle):
    """Wrap a scalar function of a 1-D array; must be pure."""

    func: Callable[[np.ndarray], float] = field(default=lambda v: float(np.abs(v).sum()))
    declared_p: float = 1.0
    name: str = "callable"
    kind = "user-composed"

    @property
    def p(self):
        return self.declared_p

    def batch(self, X):
        X = np.asarray(X)
        flat = X.reshape(-1, X.shape[-1])
        vals = np.array([self.func(row) for row in flat], dtype=float)
        return vals.reshape(X.shape[:-1])

    def describe(self):
        return self.name


def norm_lp(x, p: float) -> float:
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    return LpNorm(p)(x)


def norm_mixed(x, p: float, q: float, spine: Sequence[int]) -> float:
    """max(||z||_p, ||y||_q) with z read off the given spine positions."""
    if not 1 <= p < q:
        raise ValueError(f"need 1 <= p < q, got p={p}, q={q}")
    if any(b <= a for a, b in zip(spine, spine[1:])) or (spine and spine[0] < 1):
        raise ValueError("spine must be strictly increasing positive positions")
    v = as_vector(x)
    mask = np.zeros(v.shape[0], dtype=bool)
    for s in spine:
        if s <= v.shape[0]:
            mask[s - 1] = True
    return float(max(_lp_batch(v[mask], p), _lp_batch(v[~mask], q)))


def norm_interval_summing(x, base: float = 2.0) -> float:
    return IntervalSummingNorm(base)(x)


def norm_summing(x) -> float:
    return SummingNorm()(x)


def parse_space(spec: str, window: int | None = None) -> NormOracle:
    """Build an oracle from a string such as ``lp:1``, ``mixed:1,2``,
    ``interval:inf``, ``summing`` or ``weighted:1:1,2,3``."""
    kind, _, args = spec.partition(":")
    try:
        if kind == "lp":
            return LpNorm(float(args or 1))
        if kind == "mixed":
            p, q = (float(a) for a in (args or "1,2").split(","))
            return MixedNorm(p, q)
        if kind == "interval":
            return IntervalSummingNorm(float(args or "inf"))
        if kind == "summing" and not args:
            return SummingNorm()
        if kind == "weighted":
            exp, _, ws = args.partition(":")
            return WeightedNorm(tuple(float(w) for w in ws.split(",")), float(exp))
    except ValueError as exc:
        raise ValueError(f"bad space spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown space spec {spec!r}")


# ---------------------------------------------------------------------------
# convexity checks

def p_triangle_gap(norm: NormOracle, x, y) -> float:
    """||x||^p + ||y||^p - ||x+y||^p; nonnegative for a p-norm."""
    n = max(len(x), len(y))
    u, v = as_vector(x, n), as_vector(y, n)
    p = norm.p
    return norm(u) ** p + norm(v) ** p - norm(u + v) ** p


def aabw_check(norm: NormOracle, xs: Sequence, a, y=None, which: int = 1,
               field: str = "real") -> tuple[float, float]:
    """Left and right sides of the three p-convexity estimates.

    ``xs`` are the vectors x_n (n in J), ``a`` the scalars.  Returns
    ``(lhs, rhs)``; the estimate holds when ``lhs <= rhs``.

    1. 0 <= a_n <= 1:  ||y + sum a_n x_n|| <= A_p max_{A subset J} ||y + sum_{A} x_n||
    2. |a_n| <= 1:     ||y + sum a_n x_n|| <= A_p max_signs ||y + sum eps_n x_n||
    3. |a_n| <= 1:     ||sum a_n x_n||     <= B_p max_{A subset J} ||sum_{A} x_n||
    """
    a = np.asarray(a)
    n = max([len(v) for v in xs] + [0 if y is None else len(y)] + [1])
    X = np.array([as_vector(v, n) for v in xs]).reshape(len(xs), n)
    base = np.zeros(n, dtype=complex if field == "complex" else float) if y is None else as_vector(y, n)
    if which == 3:
        base = np.zeros_like(base)
    if which == 1 and (np.any(a < 0) or np.any(a > 1)):
        raise ValueError("estimate 1 needs 0 <= a_n <= 1")
    if which in (2, 3) and np.any(np.abs(a) > 1 + 1e-15):
        raise ValueError("estimates 2 and 3 need |a_n| <= 1")
    consts = space_constants(norm.p, field)
    lhs = norm(base + a @ X)
    k = len(xs)
    if which == 2:
        coeffs = np.array(list(itertools.product(unit_signs(field), repeat=k))).reshape(-1, k)
        const = consts.A_p
    else:
        coeffs = np.array(list(itertools.product([0.0, 1.0], repeat=k))).reshape(-1, k)
        const = consts.A_p if which == 1 else consts.B_p
    rhs = const * float(norm.batch(base[None, :] + coeffs @ X).max())
    return lhs, rhs
