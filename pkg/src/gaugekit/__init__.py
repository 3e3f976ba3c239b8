"""Sparse solutions of gauge-regularized linear inverse problems."""

from .caratheodory import SparsifyReport, certify_bound, sparsify
from .core import (
    Atom,
    AtomicRepresentation,
    DataFit,
    GaugeError,
    GaugeModel,
    Problem,
    SensingOperator,
    compute_d,
    compute_delta,
    evaluate_gauge,
    evaluate_objective,
)
from .estimator import GaugeRegressor
from .families import build_family
from .solver import SolverConfig, SolveResult, solve, solve_tiny_nonconvex

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomicRepresentation",
    "DataFit",
    "GaugeError",
    "GaugeModel",
    "GaugeRegressor",
    "Problem",
    "SensingOperator",
    "SolveResult",
    "SolverConfig",
    "SparsifyReport",
    "build_family",
    "certify_bound",
    "compute_d",
    "compute_delta",
    "evaluate_gauge",
    "evaluate_objective",
    "solve",
    "solve_tiny_nonconvex",
    "sparsify",
]
