"""Problem oracles: pullbacks of ``f`` and ``c`` to the tangent space at a base point."""
from __future__ import annotations

import abc
import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..exceptions import DomainError
from ..manifold import (
    RetractionKind,
    sphere_inverse_projection_retraction,
    sphere_param_second_derivative,
    sphere_retract,
    sphere_tangent_basis,
)

__all__ = [
    "StratificationKind",
    "Stratification",
    "IDENTITY_STRATIFICATION",
    "ProblemOracle",
    "EuclideanProblem",
    "EuclideanOracle",
]


class StratificationKind(enum.Enum):
    IDENTITY_LINEAR = "identity"
    SPHERE_PROJECTION_INVERSE = "sphere-projection-inverse"


@dataclass(frozen=True)
class Stratification:
    """Chart ``S_y: Y -> T_y Y`` of the constraint target.

    ``IDENTITY_LINEAR`` is ``S_y(z) = z - y`` on a linear target.
    ``SPHERE_PROJECTION_INVERSE`` is the inverse of the projection
    parametrization of the unit sphere, in the tangent basis of
    :func:`sphere_tangent_basis`.  Its partner for model building is the inverse
    of the exponential parametrization with generator twist ``twist``; the
    transition between the two is ``mu_p^{-1} o mu_e``.
    """

    kind: StratificationKind = StratificationKind.IDENTITY_LINEAR
    twist: tuple | None = None

    @property
    def second_order_consistent(self) -> bool:
        if self.kind is StratificationKind.IDENTITY_LINEAR:
            return True
        return self.twist is None or not np.any(self.twist)

    def chart(self, base, y) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind is StratificationKind.IDENTITY_LINEAR:
            return y - base
        return sphere_inverse_projection_retraction(base, y, sphere_tangent_basis(base))

    def transition(self, base, w) -> np.ndarray:
        """Transition map ``Psi`` between the model chart and this chart."""
        w = np.asarray(w, dtype=float)
        if self.kind is StratificationKind.IDENTITY_LINEAR:
            return w
        base = np.asarray(base, dtype=float)
        basis = sphere_tangent_basis(base)
        y = sphere_retract(RetractionKind.EXPONENTIAL, base, basis, w, twist=self.twist)
        return sphere_inverse_projection_retraction(base, y, basis)

    def second_derivative(self, base, a, b) -> np.ndarray:
        """``Psi''(0)(a, b)``."""
        a = np.asarray(a, dtype=float)
        if self.kind is StratificationKind.IDENTITY_LINEAR:
            return np.zeros_like(a)
        base = np.asarray(base, dtype=float)
        basis = sphere_tangent_basis(base)
        q = sphere_param_second_derivative(RetractionKind.EXPONENTIAL, base, basis, a, b, twist=self.twist)
        # the radial part of q is absorbed by the projection chart to second order
        return np.array([q @ basis.zeta1, q @ basis.zeta2])


IDENTITY_STRATIFICATION = Stratification()


class ProblemOracle(abc.ABC):
    """Pullback of an equality constrained problem at a fixed base point ``x``.

    Values at arbitrary tangent coordinates ``u`` use the update retraction;
    first and second derivatives at ``u = 0`` use the model retraction.  First
    derivatives do not depend on that choice.

    Subclasses implement the abstract evaluators; the default metric is the
    Euclidean inner product on tangent coordinates.
    """

    model_kind = None
    update_kind = None
    stratification: Stratification = IDENTITY_STRATIFICATION
    kkt_ordering = None
    domain_radius = np.inf

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @property
    @abc.abstractmethod
    def n_constraints(self) -> int: ...

    @abc.abstractmethod
    def objective(self, u) -> float: ...

    @abc.abstractmethod
    def constraint(self, u) -> np.ndarray: ...

    @abc.abstractmethod
    def gradient(self) -> np.ndarray: ...

    @abc.abstractmethod
    def jacobian(self): ...

    @abc.abstractmethod
    def objective_hessian(self): ...

    @abc.abstractmethod
    def constraint_hessian(self, p):
        """Second derivative of ``u -> p . c(u)`` at zero."""

    @abc.abstractmethod
    def retract(self, u):
        """New base point ``R_x(u)`` under the update retraction."""

    @cached_property
    def f0(self) -> float:
        return float(self.objective(np.zeros(self.dim)))

    @cached_property
    def c0(self) -> np.ndarray:
        return np.asarray(self.constraint(np.zeros(self.dim)), dtype=float)

    def metric(self):
        if sp.issparse(self.jacobian()):
            return sp.identity(self.dim, format="csr")
        return np.eye(self.dim)

    def norm(self, u) -> float:
        return float(np.linalg.norm(u))

    def lagrangian(self, u, p) -> float:
        return float(self.objective(u) + np.dot(p, self.constraint(u)))

    def lagrangian_gradient(self, p) -> np.ndarray:
        return self.gradient() + self.jacobian().T @ p

    def lagrangian_hessian(self, p):
        return self.objective_hessian() + self.constraint_hessian(p)

    def in_domain(self, u) -> bool:
        return self.norm(u) <= self.domain_radius

    def feasibility(self, u=None) -> float:
        c = self.c0 if u is None else self.constraint(u)
        return float(np.max(np.abs(c))) if len(c) else 0.0


class EuclideanOracle(ProblemOracle):
    """Oracle of :class:`EuclideanProblem` at ``x`` with ``R_x(u) = x + u``."""

    model_kind = update_kind = "linear"

    def __init__(self, problem: "EuclideanProblem", x):
        self.problem = problem
        self.x = np.asarray(x, dtype=float)
        self.domain_radius = problem.domain_radius

    @property
    def dim(self):
        return self.x.size

    @property
    def n_constraints(self):
        return self.c0.size

    def objective(self, u):
        return float(self.problem.fun(self.x + u))

    def constraint(self, u):
        return np.atleast_1d(np.asarray(self.problem.cons(self.x + u), dtype=float))

    @cached_property
    def _grad(self):
        return np.asarray(self.problem.grad(self.x), dtype=float)

    @cached_property
    def _jac(self):
        return np.atleast_2d(np.asarray(self.problem.jac(self.x), dtype=float))

    def gradient(self):
        return self._grad

    def jacobian(self):
        return self._jac

    def objective_hessian(self):
        return np.asarray(self.problem.hess(self.x), dtype=float)

    def constraint_hessian(self, p):
        return np.asarray(self.problem.cons_hess(self.x, p), dtype=float)

    def retract(self, u):
        u = np.asarray(u, dtype=float)
        if not self.in_domain(u):
            raise DomainError("step outside the domain of the retraction")
        return self.x + u


@dataclass(frozen=True)
class EuclideanProblem:
    """``min fun(x)  s.t.  cons(x) = 0`` on ``R^n``; calling it builds an oracle.

    ``cons_hess(x, p)`` returns ``sum_i p_i * hess(cons_i)(x)``.  A finite
    ``domain_radius`` restricts the retraction ``x + u`` to ``|u| <= radius``,
    which emulates a locally defined retraction.
    """

    fun: callable
    grad: callable
    hess: callable
    cons: callable
    jac: callable
    cons_hess: callable
    domain_radius: float = np.inf

    def __call__(self, x) -> EuclideanOracle:
        return EuclideanOracle(self, x)
