"""Lie point symmetries and first integrals of continuous and discrete
Hamiltonian systems."""

from .continuous import ContinuousSystem, FirstIntegral, State, Symmetry
from .discrete import DiscreteSystem, LatticePoint, run_lattice, step, step_first
from .errors import (
    ConfigError,
    DomainError,
    EvalError,
    HamsymError,
    NewtonError,
    NumericalError,
    ParseError,
    SingularJacobianError,
)
from .expr import Expr, diff, evaluate, parse

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContinuousSystem",
    "DiscreteSystem",
    "DomainError",
    "EvalError",
    "Expr",
    "FirstIntegral",
    "HamsymError",
    "LatticePoint",
    "NewtonError",
    "NumericalError",
    "ParseError",
    "SingularJacobianError",
    "State",
    "Symmetry",
    "diff",
    "evaluate",
    "parse",
    "run_lattice",
    "step",
    "step_first",
]
