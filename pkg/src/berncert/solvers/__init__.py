"""Nonlinear least-squares solvers."""

from .core import (
    METHODS,
    SolveReport,
    SolverConfig,
    finite_diff_jacobian,
    gauss_newton_step,
    lm_step,
    newton_step,
    solve,
    solve_gauss_newton,
    solve_lm,
    solve_newton,
)
from .linalg import lstsq
from .trust_region import dogbox_step, dogleg_step, trust_region_solve

__all__ = [
    "METHODS",
    "SolveReport",
    "SolverConfig",
    "dogbox_step",
    "dogleg_step",
    "finite_diff_jacobian",
    "gauss_newton_step",
    "lm_step",
    "lstsq",
    "newton_step",
    "solve",
    "solve_gauss_newton",
    "solve_lm",
    "solve_newton",
    "trust_region_solve",
]
