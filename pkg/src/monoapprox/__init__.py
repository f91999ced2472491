"""Monotone Sobolev approximation on masked planar lattices."""

from .fields import BUILTINS, builtin, builtin_nodes
from .grid import DomainGrid, ScalarField, VectorField, gradient, lp_grad_distance, sup_distance
from .levelset import coarea_check, extract_level_set
from .monotonicity import glue_on_bands, glue_strict_over, is_monotone, is_strictly_monotone
from .pharmonic import DirichletProblem, SolverConfig, dirichlet_solve, p_energy
from .pipeline import PipelineConfig, approximate

__version__ = "0.1.0"

__all__ = [
    "BUILTINS",
    "builtin",
    "builtin_nodes",
    "DomainGrid",
    "ScalarField",
    "VectorField",
    "gradient",
    "sup_distance",
    "lp_grad_distance",
    "is_monotone",
    "is_strictly_monotone",
    "glue_on_bands",
    "glue_strict_over",
    "p_energy",
    "SolverConfig",
    "DirichletProblem",
    "dirichlet_solve",
    "extract_level_set",
    "coarea_check",
    "PipelineConfig",
    "approximate",
]
