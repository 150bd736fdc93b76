"""Local models of the pulled-back problem and the second-order correction."""
from __future__ import annotations

import numpy as np

from ..kkt import normal_step

__all__ = ["quadratic_model", "hybrid_model", "cubic_model", "simplified_normal_step"]


def _hessian(oracle, p, H):
    return oracle.lagrangian_hessian(p) if H is None else H


def quadratic_model(oracle, p, dx, H=None) -> float:
    """``f(0) + f'(0) dx + 1/2 L''(0, p)(dx, dx)``.

    ``H`` overrides the Lagrangian Hessian, e.g. by a regularized one.
    """
    dx = np.asarray(dx, dtype=float)
    H = _hessian(oracle, p, H)
    return float(oracle.f0 + oracle.gradient() @ dx + 0.5 * dx @ (H @ dx))


def hybrid_model(oracle, p, nu, dn, dt, H=None) -> float:
    """Hybrid model of the tangential step for a fixed normal step ``dn``.

    Combines the exact Lagrangian value along ``dn`` with a quadratic model in
    ``dt``::

        L(dn, p) - (1 - nu) p.c(0) + (f'(0) + L'' dn) dt + 1/2 L''(dt, dt)

    For fixed ``dn`` it differs from ``quadratic_model(dn + dt)`` by a
    constant, so both have the same tangential minimizer.
    """
    dn = np.asarray(dn, dtype=float)
    dt = np.asarray(dt, dtype=float)
    H = _hessian(oracle, p, H)
    p = np.asarray(p, dtype=float)
    value = oracle.lagrangian(dn, p) - (1.0 - nu) * float(p @ oracle.c0)
    value += float((oracle.gradient() + H @ dn) @ dt + 0.5 * dt @ (H @ dt))
    return value


def cubic_model(model_value, omega_f, dx) -> float:
    """Add the cubic regularization ``omega_f / 6 * |dx|^3``."""
    if omega_f < 0:
        raise ValueError("omega_f must be non-negative")
    return float(model_value + omega_f / 6.0 * np.linalg.norm(dx) ** 3)


def simplified_normal_step(oracle, metric, dx, factor=None) -> np.ndarray:
    """Second-order correction ``-C^-(c(dx) - c(0) - C dx)``.

    ``C^-`` is the minimal-norm right inverse of ``C = c'(0)`` in ``metric``
    (identity when ``None``).  ``factor`` may carry a prefactored
    ``[M C^T; C 0]`` to be reused.
    """
    dx = np.asarray(dx, dtype=float)
    C = oracle.jacobian()
    if metric is None:
        metric = oracle.metric()
    remainder = oracle.constraint(dx) - oracle.c0 - C @ dx
    return normal_step(C, metric, remainder, factor=factor, ordering=oracle.kkt_ordering)
