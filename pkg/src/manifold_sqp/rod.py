"""Inextensible elastic rod under a distributed load.

The rod is discretized on ``n`` intervals of length ``h = 1/n``.  Unknowns are
the interior positions ``y_i`` in ``R^3`` and unit tangents ``v_i`` on the
sphere, ``i = 1..n-1``; the boundary values ``y_0, y_n, v_0, v_n`` are fixed.

Energy::

    f = sum_{i=0}^{n-1} sigma_i / (2h) |v_{i+1} - v_i|^2  -  sum_{i=1}^{n-1} h <g_i, y_i>

Inextensibility, one 3-vector per interval::

    c_i = (y_{i+1} - y_i) / h - v_i,   i = 0..n-1
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .kkt import KktOrdering
from .manifold import (
    ProductPoint,
    RetractionKind,
    product_retract,
    sphere_param_second_derivative,
)
from .sqp.oracle import ProblemOracle

__all__ = [
    "RodConfig",
    "helix_curve",
    "helix_initial",
    "full_nodes",
    "energy_direct",
    "constraint_direct",
    "energy_eval",
    "constraint_eval",
    "energy_derivatives",
    "constraint_derivatives",
    "rod_kkt_ordering",
    "RodOracle",
    "assemble_problem_oracle",
    "rod_oracle_factory",
]


def _unit(v, name):
    v = np.asarray(v, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError(f"{name} must be a unit vector")
    return v


@dataclass(frozen=True, eq=False)
class RodConfig:
    """Discretization, material and load data of the rod.

    ``sigma`` is a scalar or one stiffness per interval.  ``g`` is a constant
    load density or one vector per interior node.  Boundary values default to
    the helix ``radius``, ``pitch_a`` evaluated at ``s = 0`` and ``s = 1``.
    """

    n: int = 240
    sigma: float | np.ndarray = 1.0
    g: tuple | np.ndarray = (0.0, 0.0, 0.0)
    radius: float = 0.6
    pitch_a: float = 0.5
    y_a: np.ndarray | None = None
    y_b: np.ndarray | None = None
    v_a: np.ndarray | None = None
    v_b: np.ndarray | None = None
    sigma_array: np.ndarray = field(init=False, repr=False)
    load: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        object.__setattr__(self, "n", int(self.n))
        sig = np.broadcast_to(np.asarray(self.sigma, dtype=float), (self.n,)).copy()
        if np.any(sig <= 0):
            raise ValueError("sigma must be positive")
        g = np.asarray(self.g, dtype=float)
        if g.shape == (3,):
            g = np.broadcast_to(g, (self.n - 1, 3))
        if g.shape != (self.n - 1, 3):
            raise ValueError("g must be a 3-vector or one 3-vector per interior node")
        if self.radius < 0 or self.pitch_a <= 0:
            raise ValueError("helix needs radius >= 0 and pitch_a > 0")
        y0, v0 = helix_curve(self.radius, self.pitch_a, np.array([0.0, 1.0]))
        for name, val, default in [
            ("y_a", self.y_a, y0[0]),
            ("y_b", self.y_b, y0[1]),
            ("v_a", self.v_a, v0[0]),
            ("v_b", self.v_b, v0[1]),
        ]:
            val = default if val is None else np.asarray(val, dtype=float).reshape(3)
            if name.startswith("v"):
                val = _unit(val, name)
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        sig.setflags(write=False)
        g = np.array(g)
        g.setflags(write=False)
        object.__setattr__(self, "sigma_array", sig)
        object.__setattr__(self, "load", g)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dim(self) -> int:
        return 5 * (self.n - 1)

    @property
    def n_constraints(self) -> int:
        return 3 * self.n


def helix_curve(radius, pitch_a, s):
    """Helix ``[r cos(ws), r sin(ws), a^2 ws]``, ``w = 1/sqrt(r^2 + a^2)``, and its unit tangent."""
    s = np.asarray(s, dtype=float)
    w = 1.0 / np.sqrt(radius**2 + pitch_a**2)
    y = np.stack([radius * np.cos(w * s), radius * np.sin(w * s), pitch_a**2 * w * s], axis=-1)
    dy = np.stack(
        [-radius * w * np.sin(w * s), radius * w * np.cos(w * s), np.full_like(s, pitch_a**2 * w)], axis=-1
    )
    return y, dy / np.linalg.norm(dy, axis=-1, keepdims=True)


def helix_initial(cfg: RodConfig) -> ProductPoint:
    """Interior nodes sampled from the helix at ``s_i = i h``."""
    s = np.arange(1, cfg.n) * cfg.h
    y, v = helix_curve(cfg.radius, cfg.pitch_a, s)
    return ProductPoint(y, v)


def full_nodes(cfg: RodConfig, state: ProductPoint):
    """Positions and tangents at all ``n + 1`` nodes, boundaries included."""
    Y = np.vstack([cfg.y_a, state.euclidean, cfg.y_b])
    V = np.vstack([cfg.v_a, state.spheres, cfg.v_b])
    return Y, V


def energy_direct(cfg: RodConfig, Y, V) -> float:
    dV = np.diff(V, axis=0)
    bending = np.sum(cfg.sigma_array * np.sum(dV * dV, axis=1)) / (2.0 * cfg.h)
    return float(bending - cfg.h * np.sum(cfg.load * Y[1:-1]))


def constraint_direct(cfg: RodConfig, Y, V) -> np.ndarray:
    return (np.diff(Y, axis=0) / cfg.h - V[:-1]).ravel()


def energy_eval(cfg: RodConfig, u, state: ProductPoint, kind=RetractionKind.EXPONENTIAL, twist=None) -> float:
    """Pulled-back energy ``f(R_x(u))``."""
    return energy_direct(cfg, *full_nodes(cfg, product_retract(state, kind, u, twist)))


def constraint_eval(cfg: RodConfig, u, state: ProductPoint, kind=RetractionKind.EXPONENTIAL, twist=None):
    """Pulled-back constraint ``c(R_x(u))``, all ``n`` blocks."""
    return constraint_direct(cfg, *full_nodes(cfg, product_retract(state, kind, u, twist)))


def _second_derivative_table(kind, state: ProductPoint, twist):
    """``mu''_i(e_a, e_b)`` for all interior nodes, shape ``(n-1, 2, 2, 3)``."""
    E = np.eye(2)
    out = np.empty((state.n_spheres, 2, 2, 3))
    for a in range(2):
        for b in range(2):
            out[:, a, b] = sphere_param_second_derivative(
                kind, state.spheres, state.bases, E[a], E[b], twist=twist
            )
    return out


def _bending_gradient_v(cfg: RodConfig, V):
    """Euclidean gradient of the bending energy w.r.t. the interior tangents."""
    dV = np.diff(V, axis=0) * cfg.sigma_array[:, None] / cfg.h
    return dV[:-1] - dV[1:]


def energy_derivatives(cfg: RodConfig, state: ProductPoint, kind=RetractionKind.EXPONENTIAL, twist=None):
    """Gradient and Hessian (sparse CSR) of the pulled-back energy at ``u = 0``."""
    Y, V = full_nodes(cfg, state)
    J = state.bases.matrix  # (n-1, 3, 2)
    yi, ui = state.euclidean_index, state.sphere_index
    wv = _bending_gradient_v(cfg, V)

    grad = np.empty(state.dim)
    grad[yi] = -cfg.h * cfg.load
    grad[ui] = np.einsum("kia,ki->ka", J, wv)

    sig = cfg.sigma_array / cfg.h
    diag = (sig[:-1] + sig[1:])[:, None, None] * np.einsum("kia,kib->kab", J, J)
    diag += np.einsum("kabi,ki->kab", _second_derivative_table(kind, state, twist), wv)
    off = -sig[1:-1, None, None] * np.einsum("kia,kib->kab", J[:-1], J[1:])

    rows = [np.repeat(ui, 2, axis=1).ravel(), np.repeat(ui[:-1], 2, axis=1).ravel()]
    cols = [np.tile(ui, 2).ravel(), np.tile(ui[1:], 2).ravel()]
    vals = [diag.ravel(), off.ravel()]
    r = np.concatenate(rows + [cols[1]])
    c = np.concatenate(cols + [rows[1]])
    v = np.concatenate(vals + [vals[1]])
    H = sp.csr_matrix((v, (r, c)), shape=(state.dim, state.dim))
    return grad, H


def constraint_derivatives(cfg: RodConfig, state: ProductPoint, kind=RetractionKind.EXPONENTIAL, twist=None):
    """Jacobian (sparse CSR) at ``u = 0`` and ``p -> p . c''(0)`` (sparse CSR)."""
    n, h = cfg.n, cfg.h
    J = state.bases.matrix
    yi, ui = state.euclidean_index, state.sphere_index
    k = np.arange(n - 1)
    rows, cols, vals = [], [], []
    # +I/h on y_{i+1} for block i = 0..n-2, i.e. node k+1 in block k
    rows.append((3 * k[:, None] + np.arange(3)).ravel())
    cols.append(yi.ravel())
    vals.append(np.full(3 * (n - 1), 1.0 / h))
    # -I/h on y_i for block i = 1..n-1
    rows.append((3 * (k[:, None] + 1) + np.arange(3)).ravel())
    cols.append(yi.ravel())
    vals.append(np.full(3 * (n - 1), -1.0 / h))
    # -J_i on u_i for block i = 1..n-1
    rows.append(np.repeat(3 * (k[:, None] + 1) + np.arange(3), 2, axis=1).ravel())
    cols.append(np.repeat(ui[:, None, :], 3, axis=1).ravel())
    vals.append(-J.ravel())
    C = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(3 * n, state.dim),
    )

    table = _second_derivative_table(kind, state, twist)
    r = np.repeat(ui, 2, axis=1).ravel()
    c = np.tile(ui, 2).ravel()

    def weighted_hessian(p):
        p = np.asarray(p, dtype=float).reshape(n, 3)
        blocks = -np.einsum("kabi,ki->kab", table, p[1:])
        return sp.csr_matrix((blocks.ravel(), (r, c)), shape=(state.dim, state.dim))

    return C, weighted_hessian


def rod_kkt_ordering(cfg: RodConfig) -> KktOrdering:
    """Per-node ordering of ``[x; lambda]`` giving a block tridiagonal KKT matrix.

    Blocks are ``[lambda_{k-1}, y_k, u_k]`` for ``k = 1..n-1`` and a final
    ``[lambda_{n-1}]``.  Pairing each multiplier with the position it
    constrains keeps every pivot block invertible for a regular problem.
    """
    n, d = cfg.n, cfg.dim
    perm = []
    for k in range(1, n):
        perm += list(range(d + 3 * (k - 1), d + 3 * k)) + list(range(5 * (k - 1), 5 * k))
    perm += list(range(d + 3 * (n - 1), d + 3 * n))
    return KktOrdering(np.array(perm, dtype=np.intp), (8,) * (n - 1) + (3,))


class RodOracle(ProblemOracle):
    """Pullback of the rod problem at ``state``.

    Derivatives use ``model_kind``, values and updates use ``update_kind``.
    ``twist`` modifies the exponential model parametrization (see
    :func:`~manifold_sqp.manifold.sphere_retract`); it is meant for tests.
    """

    def __init__(self, cfg: RodConfig, state: ProductPoint, model_kind, update_kind, twist=None, ordering=None):
        self.cfg = cfg
        self.state = state
        self.model_kind = RetractionKind.parse(model_kind)
        self.update_kind = RetractionKind.parse(update_kind)
        self.twist = twist
        self.kkt_ordering = ordering if ordering is not None else rod_kkt_ordering(cfg)

    @property
    def dim(self):
        return self.cfg.dim

    @property
    def n_constraints(self):
        return self.cfg.n_constraints

    def objective(self, u):
        return energy_eval(self.cfg, u, self.state, self.update_kind)

    def constraint(self, u):
        return constraint_eval(self.cfg, u, self.state, self.update_kind)

    @cached_property
    def _energy(self):
        return energy_derivatives(self.cfg, self.state, self.model_kind, self.twist)

    @cached_property
    def _constraint(self):
        return constraint_derivatives(self.cfg, self.state, self.model_kind, self.twist)

    def gradient(self):
        return self._energy[0]

    def objective_hessian(self):
        return self._energy[1]

    def jacobian(self):
        return self._constraint[0]

    def constraint_hessian(self, p):
        return self._constraint[1](p)

    def retract(self, u):
        return product_retract(self.state, self.update_kind, u)


def assemble_problem_oracle(cfg: RodConfig, state: ProductPoint, model_kind, update_kind, twist=None) -> RodOracle:
    return RodOracle(cfg, state, model_kind, update_kind, twist)


def rod_oracle_factory(cfg: RodConfig, model_kind=RetractionKind.EXPONENTIAL, update_kind=RetractionKind.EXPONENTIAL, twist=None):
    """Return ``x -> RodOracle`` sharing one KKT ordering."""
    ordering = rod_kkt_ordering(cfg)

    def factory(state):
        return RodOracle(cfg, state, model_kind, update_kind, twist, ordering)

    return factory
