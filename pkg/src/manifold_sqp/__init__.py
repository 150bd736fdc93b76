"""Affine covariant composite step SQP for equality constrained problems on manifolds.

The package provides product-manifold geometry (Euclidean 3-space times unit
spheres), a saddle-point solver with inertia control, local and globalized
SQP loops, and the inextensible elastic rod benchmark.
"""
from .exceptions import (
    DegenerateDenominator,
    DomainError,
    IndefiniteOnKernel,
    ManifoldSQPError,
    MaxIterExceeded,
    RankDeficient,
    SolveFailed,
    StallDetected,
    UnboundedRegularization,
    UpdateNotDefined,
)
from .manifold import ProductPoint, RetractionKind, product_retract, transport
from .rod import RodConfig, assemble_problem_oracle, helix_initial, rod_oracle_factory
from .sqp import SolverConfig, composite_step_solve, local_sqp_solve

__version__ = "0.1.0"

__all__ = [
    "ManifoldSQPError",
    "DomainError",
    "RankDeficient",
    "IndefiniteOnKernel",
    "UnboundedRegularization",
    "UpdateNotDefined",
    "DegenerateDenominator",
    "SolveFailed",
    "MaxIterExceeded",
    "StallDetected",
    "ProductPoint",
    "RetractionKind",
    "product_retract",
    "transport",
    "RodConfig",
    "helix_initial",
    "assemble_problem_oracle",
    "rod_oracle_factory",
    "SolverConfig",
    "composite_step_solve",
    "local_sqp_solve",
]
