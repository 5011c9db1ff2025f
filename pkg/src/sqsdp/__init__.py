"""Stabilized sequential quadratic semidefinite programming.

A local solver for nonlinear semidefinite programs

    min f(x)  s.t.  g(x) = 0,  X(x) >= 0 (PSD),

built around always-feasible stabilized QSDP subproblems, with diagnostics
for the KKT error bound and superlinear/quadratic convergence-rate
measurement on a registry of small verified test problems.
"""

from .model import (
    NsdpProblem,
    PrimalDualPoint,
    apply_dX,
    apply_dX_adjoint,
    curvature_term,
    distance,
    grad_lagrangian,
    hess_lagrangian,
    kkt_residual,
    perturbed_kkt_residual,
)
from .problems import ProblemSpec, derivative_check, load, registry
from .solver import IterationRecord, RateSummary, SolveReport, SolverConfig, rate_estimate, run
from .subqp import (
    StabilizedSubproblem,
    SubproblemConfig,
    SubproblemSolution,
    build,
    eliminate_zeta,
    solve,
    solve_splitting,
    subproblem_kkt_residual,
)

__all__ = [
    "NsdpProblem",
    "PrimalDualPoint",
    "ProblemSpec",
    "IterationRecord",
    "RateSummary",
    "SolveReport",
    "SolverConfig",
    "StabilizedSubproblem",
    "SubproblemConfig",
    "SubproblemSolution",
    "apply_dX",
    "apply_dX_adjoint",
    "build",
    "curvature_term",
    "derivative_check",
    "distance",
    "eliminate_zeta",
    "grad_lagrangian",
    "hess_lagrangian",
    "kkt_residual",
    "load",
    "perturbed_kkt_residual",
    "rate_estimate",
    "registry",
    "run",
    "solve",
    "solve_splitting",
    "subproblem_kkt_residual",
]

__version__ = "0.1.0"
