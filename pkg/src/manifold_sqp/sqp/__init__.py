"""Models, damping strategies and solver loops."""
from .models import cubic_model, hybrid_model, quadratic_model, simplified_normal_step
from .oracle import (
    IDENTITY_STRATIFICATION,
    EuclideanOracle,
    EuclideanProblem,
    ProblemOracle,
    Stratification,
    StratificationKind,
)
from .solvers import IterationRecord, SolveResult, SolverState, composite_step_solve, local_sqp_solve
from .steps import (
    SolverConfig,
    acceptance_test,
    compute_nu,
    compute_tau,
    update_omega_c,
    update_omega_f,
)

__all__ = [
    "ProblemOracle",
    "EuclideanProblem",
    "EuclideanOracle",
    "Stratification",
    "StratificationKind",
    "IDENTITY_STRATIFICATION",
    "SolverConfig",
    "SolverState",
    "IterationRecord",
    "SolveResult",
    "quadratic_model",
    "hybrid_model",
    "cubic_model",
    "simplified_normal_step",
    "compute_nu",
    "compute_tau",
    "update_omega_c",
    "update_omega_f",
    "acceptance_test",
    "local_sqp_solve",
    "composite_step_solve",
]
