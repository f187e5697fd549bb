"""Dirichlet solver and verification suite for the invariant Laplacians on the unit ball."""

__version__ = "0.1.0"

from .kernel import ThetaParams, apply_delta_theta, make_params, poisson_kernel, poisson_kernel_gradient
from .solver import (
    BUILTINS,
    BoundaryFunction,
    PoissonSolver,
    closed_form_n3,
    hyperbolic_params,
    poisson_integral,
    radial_derivative,
    solution_gradient,
)
from .specfun import hyp2f1, hyp2f1_derivative

__all__ = [
    "BUILTINS",
    "BoundaryFunction",
    "PoissonSolver",
    "ThetaParams",
    "apply_delta_theta",
    "closed_form_n3",
    "hyp2f1",
    "hyp2f1_derivative",
    "hyperbolic_params",
    "make_params",
    "poisson_integral",
    "poisson_kernel",
    "poisson_kernel_gradient",
    "radial_derivative",
    "solution_gradient",
]
