"""Greedy sets, greedy sums and coordinate projections."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .spaces import NormOracle, as_vector, support

__all__ = [
    "IndexInterval", "GreedyRecord", "GreedySetCapExceeded", "NotGreedyError",
    "index_set", "precedes", "disjoint", "is_interval",
    "greedy_sets", "is_greedy_set", "canonical_greedy_set",
    "project", "project_out", "greedy_sum", "partial_sum", "indicator",
    "tga_record", "DEFAULT_SET_CAP",
]

DEFAULT_SET_CAP = 10**5


class GreedySetCapExceeded(RuntimeError):
    pass


class NotGreedyError(ValueError):
    pass


@dataclass(frozen=True)
class IndexInterval:
    """{start, ..., start + length - 1}; length 0 is the empty interval."""

    start: int
    length: int

    def __post_init__(self):
        if self.start < 1 or self.length < 0:
            raise ValueError(f"bad interval start={self.start} length={self.length}")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(range(self.start, self.start + self.length))

    def to_json(self):
        return {"start": self.start, "length": self.length}


def index_set(A: Iterable[int]) -> tuple[int, ...]:
    out = tuple(sorted(set(int(a) for a in A)))
    if out and out[0] < 1:
        raise ValueError("indices are positive integers")
    return out


def precedes(A: Sequence[int], B: Sequence[int]) -> bool:
    """A < B: every element of A is below every element of B (vacuous if empty)."""
    return not A or not B or max(A) < min(B)


def disjoint(A: Iterable[int], B: Iterable[int]) -> bool:
    return not set(A) & set(B)


def is_interval(A: Sequence[int]) -> bool:
    A = index_set(A)
    return not A or A[-1] - A[0] + 1 == len(A)


def _moduli(x) -> np.ndarray:
    return np.abs(as_vector(x))


def greedy_sets(x, m: int, dim: int | None = None, cap: int = DEFAULT_SET_CAP) -> list[tuple[int, ...]]:
    """All m-element sets A with min_{A} |x_n| >= max_{not A} |x_n|.

    For ``m <= |supp(x)|`` the list is finite and exact.  Past the support
    every zero coordinate ties; without ``dim`` the single completion by the
    smallest indices outside the support is returned, with ``dim`` all
    completions inside {1..dim}.  Output is in lexicographic order.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    mod = _moduli(x)
    supp = support(x)
    k = len(supp)
    if m > k:
        zeros_needed = m - k
        if dim is None:
            pad = _smallest_outside(supp, zeros_needed)
            return [index_set(supp + pad)]
        pool = [n for n in range(1, dim + 1) if n not in set(supp)]
        if len(pool) < zeros_needed:
            raise ValueError(f"dimension {dim} too small for m={m}")
        if math.comb(len(pool), zeros_needed) > cap:
            raise GreedySetCapExceeded(f"more than {cap} greedy sets")
        return [index_set(supp + c) for c in itertools.combinations(pool, zeros_needed)]
    if m == 0:
        return [()]
    order = sorted(supp, key=lambda n: -mod[n - 1])
    threshold = mod[order[m - 1] - 1]
    strict = [n for n in supp if mod[n - 1] > threshold]
    ties = [n for n in supp if mod[n - 1] == threshold]
    need = m - len(strict)
    if math.comb(len(ties), need) > cap:
        raise GreedySetCapExceeded(f"more than {cap} greedy sets")
    return sorted(index_set(strict + list(c)) for c in itertools.combinations(ties, need))


def _smallest_outside(supp: Sequence[int], count: int) -> tuple[int, ...]:
    taken = set(supp)
    out = []
    n = 1
    while len(out) < count:
        if n not in taken:
            out.append(n)
        n += 1
    return tuple(out)


def is_greedy_set(x, A: Iterable[int], m: int | None = None) -> bool:
    """Check the threshold condition verbatim (positions past the array are zero)."""
    A = index_set(A)
    if m is not None and len(A) != m:
        return False
    mod = _moduli(x)
    n = mod.shape[0]
    if not A:
        return True
    inside = np.array([mod[a - 1] if a <= n else 0.0 for a in A])
    mask = np.ones(n, dtype=bool)
    mask[[a - 1 for a in A if a <= n]] = False
    outside = mod[mask].max(initial=0.0)
    return bool(inside.min() >= outside)


def canonical_greedy_set(x, m: int) -> tuple[int, ...]:
    """The leftmost greedy set Lambda_m(x): ties are broken toward small indices."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    mod = _moduli(x)
    supp = support(x)
    if m >= len(supp):
        return index_set(supp + _smallest_outside(supp, m - len(supp)))
    # stable sort keeps index order within ties
    order = sorted(supp, key=lambda n: -mod[n - 1])
    return index_set(order[:m])


def project(x, A: Iterable[int]) -> np.ndarray:
    """P_A(x): keep the coordinates indexed by A."""
    v = as_vector(x)
    out = np.zeros_like(v)
    idx = [a - 1 for a in A if a <= v.shape[0]]
    out[idx] = v[idx]
    return out


def project_out(x, A: Iterable[int]) -> np.ndarray:
    """x - P_A(x)."""
    v = as_vector(x).copy()
    idx = [a - 1 for a in A if a <= v.shape[0]]
    v[idx] = 0
    return v


def greedy_sum(x, A: Iterable[int]) -> np.ndarray:
    A = index_set(A)
    if not is_greedy_set(x, A):
        raise NotGreedyError(f"{A} is not a greedy set of x")
    return project(x, A)


def partial_sum(x, m: int) -> np.ndarray:
    """S_m(x), the projection onto {1, ..., m}."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    v = as_vector(x)
    out = np.zeros_like(v)
    out[:m] = v[:m]
    return out


def indicator(A: Iterable[int], signs: Mapping[int, complex] | Sequence | None = None,
              dim: int | None = None) -> np.ndarray:
    """1_A, or 1_{eps A} when signs are given (a mapping or a sequence aligned with A)."""
    A = index_set(A)
    n = max(A[-1] if A else 0, dim or 0)
    if signs is None:
        out = np.zeros(n)
        out[[a - 1 for a in A]] = 1.0
        return out
    if not isinstance(signs, Mapping):
        signs = list(signs)
        if len(signs) != len(A):
            raise ValueError("need one sign per index")
        signs = dict(zip(A, signs))
    missing = [a for a in A if a not in signs]
    if missing:
        raise ValueError(f"signs missing for {missing}")
    vals = [signs[a] for a in A]
    if any(abs(abs(s) - 1) > 1e-12 for s in vals):
        raise ValueError("signs must have modulus one")
    out = np.zeros(n, dtype=complex if any(isinstance(s, complex) for s in vals) else float)
    for a, s in zip(A, vals):
        out[a - 1] = s
    return out


@dataclass
class GreedyRecord:
    x: np.ndarray
    m: int
    greedy_set: tuple[int, ...]
    residual_norm: float
    functionals: dict[str, float] = field(default_factory=dict)


def tga_record(x, m: int, norm: NormOracle, with_functionals: bool = False) -> GreedyRecord:
    """One thresholding step using the canonical greedy set."""
    A = canonical_greedy_set(x, m)
    rec = GreedyRecord(as_vector(x), m, A, norm(project_out(x, A)))
    if with_functionals:
        from . import functionals as fn

        rec.functionals = {
            "sigma_tilde": fn.sigma_tilde(x, m, norm).value,
            "sigma_check": fn.sigma_check(x, m, norm).value,
            "sigma_hathat": fn.sigma_hathat(x, m, norm).value,
            "partial_tail": norm(as_vector(x) - partial_sum(x, m)),
        }
    return rec
