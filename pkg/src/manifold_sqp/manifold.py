"""Geometry of products of Euclidean 3-space and the unit sphere.

Sphere routines are vectorized: ``v`` may be a single unit vector of shape
``(3,)`` or a stack of shape ``(..., 3)``; tangent coordinates then have shape
``(..., 2)``.

Tangent coordinates of a :class:`ProductPoint` are laid out node by node:
node ``i`` contributes three coefficients for its Euclidean block (if it has
one) followed by two coefficients for its sphere block (if it has one).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DomainError

__all__ = [
    "RetractionKind",
    "TangentBasis2",
    "ProductPoint",
    "sphere_tangent_basis",
    "sphere_retract",
    "sphere_param_first_derivative",
    "sphere_param_second_derivative",
    "sphere_inverse_projection_retraction",
    "product_retract",
    "transport",
]


class RetractionKind(enum.Enum):
    PROJECTION = "projection"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value) -> "RetractionKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown retraction {value!r}; expected 'projection' or 'exponential'"
            ) from None


@dataclass(frozen=True, eq=False)
class TangentBasis2:
    """Orthonormal basis ``zeta1, zeta2`` of the tangent plane(s) at ``v``."""

    zeta1: np.ndarray
    zeta2: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """Basis vectors as columns, shape ``(..., 3, 2)``."""
        return np.stack([self.zeta1, self.zeta2], axis=-1)

    def __getitem__(self, idx) -> "TangentBasis2":
        return TangentBasis2(self.zeta1[idx], self.zeta2[idx])


def sphere_tangent_basis(v) -> TangentBasis2:
    """Deterministic orthonormal tangent basis at ``v``.

    The first vector is the normalized projection of the coordinate axis least
    aligned with ``v`` (lowest index on ties); the second is ``v x zeta1``.
    """
    v = np.asarray(v, dtype=float)
    axis = np.argmin(np.abs(v), axis=-1)
    e = np.zeros_like(v)
    np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
    z1 = e - np.sum(e * v, axis=-1, keepdims=True) * v
    z1 = z1 / np.linalg.norm(z1, axis=-1, keepdims=True)
    z2 = np.cross(v, z1)
    return TangentBasis2(z1, z2)


def _tangent_vector(basis: TangentBasis2, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u[..., 0:1] * basis.zeta1 + u[..., 1:2] * basis.zeta2


def _rotation_vector(v, basis, u, twist) -> np.ndarray:
    # generator u1*C1 + u2*C2 with C_j = [v x zeta_j + twist_j v]_x, so C_j v = zeta_j
    omega = np.cross(v, _tangent_vector(basis, u))
    if twist is not None:
        t = np.asarray(u, dtype=float) @ np.asarray(twist, dtype=float)
        omega = omega + np.asarray(t)[..., None] * v
    return omega


def _rotate(omega, x) -> np.ndarray:
    """Apply ``exp([omega]_x)`` to ``x`` by Rodrigues' formula."""
    theta = np.linalg.norm(omega, axis=-1, keepdims=True)
    s = np.sinc(theta / np.pi)  # sin(t)/t
    c = 0.5 * np.sinc(theta / (2.0 * np.pi)) ** 2  # (1 - cos t)/t^2
    wx = np.cross(omega, x)
    return x + s * wx + c * np.cross(omega, wx)


def sphere_retract(kind, v, basis: TangentBasis2, u, twist=None) -> np.ndarray:
    """Evaluate the local parametrization ``mu_v(u)`` of the chosen retraction.

    ``twist`` (exponential only) adds ``twist_j * [v]_x`` to the generators.
    This leaves the first derivative unchanged and alters the second one; the
    default ``None`` gives the geodesic exponential.
    """
    kind = RetractionKind.parse(kind)
    v = np.asarray(v, dtype=float)
    if kind is RetractionKind.PROJECTION:
        w = v + _tangent_vector(basis, u)
        return w / np.linalg.norm(w, axis=-1, keepdims=True)
    return _rotate(_rotation_vector(v, basis, u, twist), v)


def sphere_param_first_derivative(v, basis: TangentBasis2, du) -> np.ndarray:
    """``mu'(0) du``; identical for both parametrizations."""
    return _tangent_vector(basis, du)


def sphere_param_second_derivative(kind, v, basis: TangentBasis2, du, dw, twist=None) -> np.ndarray:
    """Symmetric bilinear ``mu''(0)(du, dw)`` as an ambient 3-vector."""
    kind = RetractionKind.parse(kind)
    v = np.asarray(v, dtype=float)
    du = np.asarray(du, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if kind is RetractionKind.PROJECTION:
        return -np.sum(du * dw, axis=-1, keepdims=True) * v
    a = _rotation_vector(v, basis, du, twist)
    b = _rotation_vector(v, basis, dw, twist)
    ab = np.cross(a, np.cross(b, v))
    ba = np.cross(b, np.cross(a, v))
    return 0.5 * (ab + ba)


def sphere_inverse_projection_retraction(v, w, basis: TangentBasis2) -> np.ndarray:
    """Coordinates ``u`` with ``sphere_retract(PROJECTION, v, basis, u) == w``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    vw = np.sum(w * v, axis=-1, keepdims=True)
    if np.any(vw <= 0.0):
        raise DomainError("point lies outside the open hemisphere centred at the base point")
    dv = w / vw - v
    return np.stack(
        [np.sum(dv * basis.zeta1, axis=-1), np.sum(dv * basis.zeta2, axis=-1)], axis=-1
    )


@dataclass(frozen=True, eq=False)
class ProductPoint:
    """Point of ``(R^3)^ne x (S^2)^ns`` in ambient coordinates.

    Tangent bases of the sphere blocks are computed on first use and cached.
    """

    euclidean: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    spheres: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        y = np.array(self.euclidean, dtype=float).reshape(-1, 3)
        v = np.array(self.spheres, dtype=float).reshape(-1, 3)
        y.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "euclidean", y)
        object.__setattr__(self, "spheres", v)

    @property
    def n_euclidean(self) -> int:
        return self.euclidean.shape[0]

    @property
    def n_spheres(self) -> int:
        return self.spheres.shape[0]

    @property
    def dim(self) -> int:
        """Dimension of the tangent space (length of a TangentCoords vector)."""
        return 3 * self.n_euclidean + 2 * self.n_spheres

    @cached_property
    def bases(self) -> TangentBasis2:
        return sphere_tangent_basis(self.spheres)

    @cached_property
    def _layout(self):
        ne, ns = self.n_euclidean, self.n_spheres
        y_idx = np.empty((ne, 3), dtype=np.intp)
        u_idx = np.empty((ns, 2), dtype=np.intp)
        pos = 0
        for i in range(max(ne, ns)):
            if i < ne:
                y_idx[i] = np.arange(pos, pos + 3)
                pos += 3
            if i < ns:
                u_idx[i] = np.arange(pos, pos + 2)
                pos += 2
        return y_idx, u_idx

    @property
    def euclidean_index(self) -> np.ndarray:
        """Positions of the Euclidean coefficients, shape ``(ne, 3)``."""
        return self._layout[0]

    @property
    def sphere_index(self) -> np.ndarray:
        """Positions of the sphere coefficients, shape ``(ns, 2)``."""
        return self._layout[1]

    def split(self, u):
        """Split a coordinate vector into ``(dy, du)`` block arrays."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"expected tangent coordinates of length {self.dim}, got {u.shape}")
        return u[self.euclidean_index], u[self.sphere_index]

    def join(self, dy, du) -> np.ndarray:
        out = np.empty(self.dim)
        out[self.euclidean_index] = dy
        out[self.sphere_index] = du
        return out


def product_retract(x: ProductPoint, kind, u, twist=None) -> ProductPoint:
    """Componentwise retraction: additive on Euclidean blocks, ``mu`` on spheres."""
    dy, du = x.split(u)
    v_new = sphere_retract(kind, x.spheres, x.bases, du, twist=twist) if x.n_spheres else x.spheres
    return ProductPoint(x.euclidean + dy, v_new)


def transport(x1: ProductPoint, x2: ProductPoint, u) -> np.ndarray:
    """Nonlinear transport ``R_{x2}^{-1} o R_{x1}`` using the projection retraction."""
    if (x1.n_euclidean, x1.n_spheres) != (x2.n_euclidean, x2.n_spheres):
        raise ValueError("points belong to different product manifolds")
    dy, du = x1.split(u)
    y = x1.euclidean + dy - x2.euclidean
    if x1.n_spheres:
        w = sphere_retract(RetractionKind.PROJECTION, x1.spheres, x1.bases, du)
        us = sphere_inverse_projection_retraction(x2.spheres, w, x2.bases)
    else:
        us = du
    return x2.join(y, us)
