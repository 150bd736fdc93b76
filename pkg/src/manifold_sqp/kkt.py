"""Direct solution of saddle-point (KKT) systems.

All systems have the form::

    [ H  C^T ] [ x ]   [ r1 ]
    [ C   0  ] [ y ] + [ r2 ] = 0

with ``H`` symmetric ``d x d`` and ``C`` of shape ``m x d``.  The factorization
is symmetric indefinite and reports the inertia of the block matrix, from
which positive definiteness of ``H`` on ``ker C`` is read off: for surjective
``C`` the inertia is ``(d, m, 0)`` exactly in that case.

Two factorization paths share the same semantics.  Small or unstructured
systems go through a dense Bunch-Kaufman ``LDL^T`` (LAPACK ``sytrf`` via
:func:`scipy.linalg.ldl`).  Systems that become block tridiagonal after a
symmetric permutation (the rod discretization, see :class:`KktOrdering`) use a
block ``LDL^T`` with dense pivot blocks, which costs ``O(N b^2)``.  The dense
path is the fallback whenever a pivot block is numerically singular.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .exceptions import IndefiniteOnKernel, RankDeficient, UnboundedRegularization

__all__ = [
    "PIVOT_TOL",
    "KktOrdering",
    "SaddlePointSystem",
    "KktSolution",
    "SaddleFactorization",
    "RegularizedHessian",
    "solve_saddle",
    "normal_step",
    "lagrange_multiplier",
    "tangential_step",
    "hessian_regularize",
]

_log = logging.getLogger(__name__)

PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KktOrdering:
    """Symmetric permutation making the KKT matrix block tridiagonal.

    ``perm[k]`` is the index (into the stacked vector ``[x; y]``) of the
    unknown placed at position ``k``; ``block_sizes`` partitions the permuted
    unknowns into consecutive diagonal blocks.
    """

    perm: np.ndarray
    block_sizes: tuple

    def __post_init__(self):
        if sum(self.block_sizes) != len(self.perm):
            raise ValueError("block sizes do not add up to the permutation length")


@dataclass(eq=False)
class SaddlePointSystem:
    H: object
    C: object
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        self.r1 = np.asarray(self.r1, dtype=float)
        self.r2 = np.asarray(self.r2, dtype=float)
        d = self.H.shape[0]
        m = self.C.shape[0]
        if self.H.shape != (d, d) or self.C.shape[1] != d:
            raise ValueError(f"inconsistent block shapes H{self.H.shape}, C{self.C.shape}")
        if self.r1.shape != (d,) or self.r2.shape != (m,):
            raise ValueError("right-hand side lengths do not match the blocks")
        asym = abs(self.H - self.H.T).max()
        scale = abs(self.H).max() if d else 0.0
        if asym > 1e-12 * max(scale, 1.0):
            raise ValueError(f"H is not symmetric (max asymmetry {asym:.3g})")


@dataclass(frozen=True, eq=False)
class KktSolution:
    step: np.ndarray
    multiplier: np.ndarray
    residual_norm: float


def _as_operator(A):
    return A if sp.issparse(A) else np.asarray(A, dtype=float)


def _assemble(H, C):
    if sp.issparse(H) or sp.issparse(C):
        return sp.bmat([[sp.csr_matrix(H), sp.csr_matrix(C).T], [sp.csr_matrix(C), None]], format="csr")
    H = np.asarray(H, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, H.shape[0])
    return np.block([[H, C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])


def _count(eigs, tol):
    return (
        int(np.sum(eigs > tol)),
        int(np.sum(eigs < -tol)),
        int(np.sum(np.abs(eigs) <= tol)),
    )


class _DenseLDL:
    def __init__(self, K, scale):
        self.K = np.asarray(K.toarray() if sp.issparse(K) else K, dtype=float)
        n = self.K.shape[0]
        if n == 0:
            self.inertia = (0, 0, 0)
            return
        lu, d, perm = scipy.linalg.ldl(self.K, lower=True, hermitian=True)
        self.tri = lu[perm]
        self.perm = perm
        self.d = d
        eigs = []
        i = 0
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                eigs.extend(np.linalg.eigvalsh(d[i : i + 2, i : i + 2]))
                i += 2
            else:
                eigs.append(d[i, i])
                i += 1
        self.inertia = _count(np.asarray(eigs), PIVOT_TOL * scale)

    def solve(self, rhs):
        if self.K.shape[0] == 0:
            return rhs.copy()
        # K = L D L^T with L[perm] lower unit triangular
        z = scipy.linalg.solve_triangular(self.tri, rhs[self.perm], lower=True, unit_diagonal=True)
        w = scipy.linalg.solve(self.d, z, assume_a="sym")
        t = scipy.linalg.solve_triangular(self.tri.T, w, lower=False, unit_diagonal=True)
        out = np.empty_like(t)
        out[self.perm] = t
        return out


class _SingularPivot(Exception):
    pass


class _BlockTridiagonalLDL:
    def __init__(self, K, ordering: KktOrdering, scale):
        perm = np.asarray(ordering.perm)
        sizes = np.asarray(ordering.block_sizes, dtype=np.intp)
        nb = len(sizes)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        block_of = np.repeat(np.arange(nb), sizes)
        local = np.arange(len(perm)) - starts[block_of]

        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        Kc = sp.coo_matrix(K)
        r, c, v = inv[Kc.row], inv[Kc.col], Kc.data
        br, bc = block_of[r], block_of[c]
        if np.any(np.abs(br - bc) > 1):
            raise _SingularPivot("matrix is not block tridiagonal in the given ordering")
        bmax = int(sizes.max())
        D = np.zeros((nb, bmax, bmax))
        B = np.zeros((max(nb - 1, 0), bmax, bmax))
        on = br == bc
        np.add.at(D, (br[on], local[r[on]], local[c[on]]), v[on])
        low = br == bc + 1
        np.add.at(B, (bc[low], local[r[low]], local[c[low]]), v[low])

        self.perm, self.inv, self.sizes, self.starts = perm, inv, sizes, starts
        self.B = [B[k, : sizes[k + 1], : sizes[k]] for k in range(nb - 1)]
        self.Sinv = []
        eigs = []
        S = D[0, : sizes[0], : sizes[0]]
        for k in range(nb):
            w, V = np.linalg.eigh(S)
            if np.min(np.abs(w)) <= PIVOT_TOL * max(scale, np.max(np.abs(w))):
                raise _SingularPivot(f"pivot block {k} is numerically singular")
            eigs.append(w)
            Sinv = (V / w) @ V.T
            self.Sinv.append(Sinv)
            if k + 1 < nb:
                Bk = self.B[k]
                S = D[k + 1, : sizes[k + 1], : sizes[k + 1]] - Bk @ Sinv @ Bk.T
        self.inertia = _count(np.concatenate(eigs), 0.0)

    def solve(self, rhs):
        b = rhs[self.perm]
        nb = len(self.sizes)
        z = [b[s : s + n] for s, n in zip(self.starts, self.sizes)]
        for k in range(1, nb):
            z[k] = z[k] - self.B[k - 1] @ (self.Sinv[k - 1] @ z[k - 1])
        x = [None] * nb
        x[-1] = self.Sinv[-1] @ z[-1]
        for k in range(nb - 2, -1, -1):
            x[k] = self.Sinv[k] @ (z[k] - self.B[k].T @ x[k + 1])
        return np.concatenate(x)[self.inv]


class SaddleFactorization:
    """Symmetric indefinite factorization of ``[[H, C^T], [C, 0]]``.

    Parameters
    ----------
    H : (d, d) array or sparse matrix
    C : (m, d) array or sparse matrix
    ordering : KktOrdering, optional
        Enables the block tridiagonal path.
    """

    def __init__(self, H, C, ordering: KktOrdering | None = None):
        self.H = _as_operator(H)
        self.C = _as_operator(C)
        self.d = self.H.shape[0]
        self.C = self.C.reshape(-1, self.d) if not sp.issparse(self.C) else self.C
        self.m = self.C.shape[0]
        self.K = _assemble(self.H, self.C)
        self.scale = float(abs(self.K).max()) if self.K.shape[0] else 1.0
        self._impl = None
        if ordering is not None:
            try:
                self._impl = _BlockTridiagonalLDL(self.K, ordering, self.scale)
            except _SingularPivot as exc:
                _log.debug("block LDL failed (%s); using dense factorization", exc)
        if self._impl is None:
            self._impl = _DenseLDL(self.K, self.scale)
        self.inertia = self._impl.inertia
        self._rank_ok = None

    @property
    def singular(self) -> bool:
        return self.inertia[2] > 0

    @property
    def definite_on_kernel(self) -> bool:
        return self.inertia == (self.d, self.m, 0)

    def constraint_rank_deficient(self) -> bool:
        if self._rank_ok is None:
            C = self.C.toarray() if sp.issparse(self.C) else self.C
            if self.m == 0:
                self._rank_ok = True
            elif self.m > self.d:
                self._rank_ok = False
            else:
                s = np.linalg.svd(C, compute_uv=False)
                self._rank_ok = bool(s[-1] > PIVOT_TOL * max(s[0], 1e-300))
        return not self._rank_ok

    def check(self):
        """Raise unless the system is uniquely solvable with ``H`` definite on ``ker C``."""
        if self.definite_on_kernel:
            return
        if self.singular and self.constraint_rank_deficient():
            raise RankDeficient(f"constraint Jacobian is rank deficient (inertia {self.inertia})")
        raise IndefiniteOnKernel(f"H is not positive definite on ker C (inertia {self.inertia})")

    def solve(self, r1, r2):
        """Return ``(x, y, residual_norm)`` solving the system with right-hand side ``(r1, r2)``."""
        if self.singular:
            self.check()
            raise RankDeficient("saddle-point matrix is singular")
        rhs = -np.concatenate([np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)])
        z = self._impl.solve(rhs)
        res = self.K @ z - rhs
        # one step of iterative refinement
        z = z - self._impl.solve(res)
        res = self.K @ z - rhs
        return z[: self.d], z[self.d :], float(np.linalg.norm(res))


def _factor(H, C, factor, ordering):
    if factor is None:
        factor = SaddleFactorization(H, C, ordering)
    factor.check()
    return factor


def solve_saddle(system: SaddlePointSystem, ordering: KktOrdering | None = None) -> KktSolution:
    """Solve the full saddle-point system (Lagrange-Newton form)."""
    factor = _factor(system.H, system.C, None, ordering)
    x, y, res = factor.solve(system.r1, system.r2)
    return KktSolution(x, y, res)


def normal_step(C, metric_H, c0, factor=None, ordering=None) -> np.ndarray:
    """Minimal-norm solution of ``C w + c0 = 0`` in the metric ``metric_H``."""
    factor = _factor(metric_H, C, factor, ordering)
    w, _, _ = factor.solve(np.zeros(factor.d), c0)
    return w


def lagrange_multiplier(C, metric_H, fprime, factor=None, ordering=None):
    """Least-squares multiplier estimate.

    Returns ``(v, p)`` where ``v`` is the projected negative gradient and ``p``
    makes ``fprime + C^T p`` vanish on ``(ker C)^perp``.
    """
    factor = _factor(metric_H, C, factor, ordering)
    v, p, _ = factor.solve(fprime, np.zeros(factor.m))
    return v, p


def tangential_step(H_lag, C, rhs, factor=None, ordering=None):
    """Minimize ``rhs.dt + 1/2 dt.H dt`` over ``ker C``; returns ``(dt, dp)``."""
    factor = _factor(H_lag, C, factor, ordering)
    dt, dp, _ = factor.solve(rhs, np.zeros(factor.m))
    return dt, dp


@dataclass(frozen=True, eq=False)
class RegularizedHessian:
    matrix: object
    shift: float
    factor: SaddleFactorization


def hessian_regularize(H_lag, C, ordering=None, max_doublings=60) -> RegularizedHessian:
    """Smallest shift from ``{0, l0, 2 l0, 4 l0, ...}`` making ``H + shift*I`` definite on ``ker C``.

    ``l0 = 1e-8 (1 + max|H|)``.
    """
    H = _as_operator(H_lag)
    d = H.shape[0]
    eye = sp.identity(d, format="csr") if sp.issparse(H) else np.eye(d)
    lam0 = 1e-8 * (1.0 + (abs(H).max() if d else 0.0))
    shifts = [0.0] + [lam0 * 2.0**k for k in range(max_doublings + 1)]
    for lam in shifts:
        Hs = H + lam * eye if lam else H
        factor = SaddleFactorization(Hs, C, ordering)
        if factor.definite_on_kernel:
            if lam:
                _log.debug("Hessian regularized with shift %.3e", lam)
            return RegularizedHessian(Hs, lam, factor)
        if factor.singular and factor.constraint_rank_deficient():
            raise RankDeficient("constraint Jacobian is rank deficient")
    raise UnboundedRegularization(f"no shift up to {shifts[-1]:.3e} certified definiteness on ker C")
