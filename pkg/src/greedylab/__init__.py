"""Thresholding greedy algorithm, greedy-type error functionals and constants
over finite-dimensional sequence-space models."""
from .spaces import (IntervalSummingNorm, LpNorm, MaxNorm, MixedNorm, NormOracle, SummingNorm,
                     WeightedNorm, parse_space, space_constants)
from .tga import canonical_greedy_set, greedy_sets, partial_sum, project
from .functionals import best_prefix_tail, min_sigma, sigma_check, sigma_hathat, sigma_tilde

__version__ = "0.1.0"

__all__ = ["IntervalSummingNorm", "LpNorm", "MaxNorm", "MixedNorm", "NormOracle", "SummingNorm",
           "WeightedNorm", "parse_space", "space_constants", "canonical_greedy_set", "greedy_sets",
           "partial_sum", "project", "best_prefix_tail", "min_sigma", "sigma_check", "sigma_hathat",
           "sigma_tilde"]
