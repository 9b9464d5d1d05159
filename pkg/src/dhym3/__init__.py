"""Continuity-path solver and lemma harness for the deformed Hermitian-Yang-Mills
equation on flat complex 3-tori."""

from .continuation import SolverConfig, continue_path, newton_solve, verify_solution
from .path_constants import ClassIntegrals, compute_ct, compute_theta_hat
from .phase_algebra import PhaseParameter, cone_check, relative_spectrum, solve_lambda3
from .torus import BackgroundData, TorusGrid, make_grid

__all__ = [
    "BackgroundData",
    "ClassIntegrals",
    "PhaseParameter",
    "SolverConfig",
    "TorusGrid",
    "compute_ct",
    "compute_theta_hat",
    "cone_check",
    "continue_path",
    "make_grid",
    "newton_solve",
    "relative_spectrum",
    "solve_lambda3",
    "verify_solution",
]
