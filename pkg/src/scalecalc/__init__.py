"""Finite-scale quantum calculus and the variational checks built on it."""

from .gridfn import AnalyticFunction, Grid, GridFunction, evaluate, sample
from .scale_ops import (
    ScaleParams,
    conj_scale_derivative,
    delta_minus,
    delta_plus,
    scale_derivative,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticFunction", "Grid", "GridFunction", "ScaleParams", "conj_scale_derivative",
    "delta_minus", "delta_plus", "evaluate", "sample", "scale_derivative",
]
