"""Functional decomposition of prediction functions into main and
interaction effects under a joint feature distribution, with an empirical
checker for the interaction-decomposition properties."""
from __future__ import annotations

from .core import Decomposition, TermTable, build, centered, is_partial_zero, partial_difference, reconstruct, substitute
from .expr import ExprError, ParseError, diff, evaluate, expand_polynomial, parse, to_text
from .functions import Fn, Tabulated, as_fn
from .hstat import HMatrix, HStat, h_squared, h_unnormalized, pair_statistic, pairwise
from .idcheck import Case, PropertyReport, battery_for, judge, random_polynomials, run_suite
from .methods import (METHOD_NAMES, Method, MethodError, ale, ale_rp, ce, fanova,
                      functional_anova_decomposition, parse_method, pd_naive,
                      pd_naive_decomposition, pd_proper, poly, poly_decomposition, rp)
from .space import FeatureSpace, MixingSpec, from_mixing, independent, load_space_config
from .subsets import SubsetJ, lattice

__version__ = "0.1.0"

__all__ = [
    "Case",
    "Decomposition",
    "ExprError",
    "FeatureSpace",
    "Fn",
    "HMatrix",
    "HStat",
    "METHOD_NAMES",
    "Method",
    "MethodError",
    "MixingSpec",
    "ParseError",
    "PropertyReport",
    "SubsetJ",
    "Tabulated",
    "TermTable",
    "ale",
    "ale_rp",
    "annotations",
    "as_fn",
    "battery_for",
    "build",
    "ce",
    "centered",
    "diff",
    "evaluate",
    "expand_polynomial",
    "fanova",
    "from_mixing",
    "functional_anova_decomposition",
    "h_squared",
    "h_unnormalized",
    "independent",
    "is_partial_zero",
    "judge",
    "lattice",
    "load_space_config",
    "pair_statistic",
    "pairwise",
    "parse",
    "parse_method",
    "partial_difference",
    "pd_naive",
    "pd_naive_decomposition",
    "pd_proper",
    "poly",
    "poly_decomposition",
    "random_polynomials",
    "reconstruct",
    "rp",
    "run_suite",
    "substitute",
    "to_text",
]
