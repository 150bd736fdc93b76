"""Damping factors, Lipschitz estimates and the acceptance test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateDenominator

__all__ = [
    "SolverConfig",
    "OMEGA_C_FLOOR",
    "compute_nu",
    "compute_tau",
    "update_omega_c",
    "update_omega_f",
    "acceptance_test",
]

OMEGA_C_FLOOR = 1e-12
TAU_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the composite step method.

    Attributes
    ----------
    theta_aim, theta_acc : float
        Desired and maximal accepted contraction ``|ds| / |dx|``.
    rho_ellbow : float
        Fraction of ``theta_aim`` granted to the normal step.
    eta_lo, eta_hat : float
        Decrease test threshold, and the ratio above which ``omega_f`` is not
        increased.
    b_lo, b_hat, b_hi : float
        Safeguards of the ``omega_f`` update: lower and upper clamp factors and
        the minimal growth after a failed decrease test.
    """

    theta_aim: float = 0.5
    theta_acc: float = 0.75
    rho_ellbow: float = 0.8
    eta_lo: float = 0.25
    eta_hat: float = 0.9
    b_lo: float = 0.25
    b_hat: float = 2.0
    b_hi: float = 4.0
    omega_c_init: float = 1e-6
    omega_f_init: float = 1e-6
    tol_dx: float = 1e-10
    tol_feas: float = 1e-10
    max_iter: int = 100
    hybrid_model: bool = False
    stall_limit: int = 30

    def __post_init__(self):
        checks = [
            (0 < self.theta_aim < 1, "theta_aim must lie in (0, 1)"),
            (0 < self.theta_acc < 1, "theta_acc must lie in (0, 1)"),
            (0 < self.rho_ellbow <= 1, "rho_ellbow must lie in (0, 1]"),
            (0 < self.eta_lo < 1, "eta_lo must lie in (0, 1)"),
            (self.eta_lo <= self.eta_hat < 1, "eta_hat must lie in [eta_lo, 1)"),
            (0 < self.b_lo < 1 < self.b_hat <= self.b_hi, "need 0 < b_lo < 1 < b_hat <= b_hi"),
            (self.omega_c_init >= 0, "omega_c_init must be non-negative"),
            (self.omega_f_init > 0, "omega_f_init must be positive"),
            (self.tol_dx > 0 and self.tol_feas > 0, "tolerances must be positive"),
            (int(self.max_iter) == self.max_iter and self.max_iter >= 0, "max_iter must be a non-negative integer"),
            (int(self.stall_limit) == self.stall_limit and self.stall_limit >= 1, "stall_limit must be a positive integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


def compute_nu(omega_c, theta_aim, rho_ellbow, dn, domain_cap=math.inf) -> float:
    """Largest ``nu <= 1`` with ``omega_c / 2 * nu |dn| <= rho_ellbow * theta_aim``.

    ``dn`` may be the full normal step or its norm.  ``domain_cap`` bounds
    ``nu |dn|`` additionally.
    """
    norm = float(np.linalg.norm(dn))
    if norm == 0.0:
        return 1.0
    nu = 1.0
    if omega_c > 0:
        nu = min(nu, 2.0 * rho_ellbow * theta_aim / (omega_c * norm))
    return min(nu, domain_cap / norm)


def _max_tau_in_ball(dn, Dt, radius) -> float:
    """Largest ``tau in [0, 1]`` with ``|dn + tau Dt| <= radius``."""
    if not math.isfinite(radius):
        return 1.0
    a = float(Dt @ Dt)
    b = float(dn @ Dt)
    c = float(dn @ dn) - radius * radius
    if c > 0:
        return 0.0
    if a + 2 * b + c <= 0:
        return 1.0
    # c <= 0 < a, so the positive root exists; the stable form avoids cancellation
    disc = math.sqrt(max(b * b - a * c, 0.0))
    root = -c / (b + disc) if b + disc > 0 else (-b + disc) / a
    return min(max(root, 0.0), 1.0)


def compute_tau(oracle, p, omega_f, omega_c, theta_aim, dn, Dt, H=None) -> float:
    """Damping factor of the tangential step.

    Minimizes ``phi(tau) = f'(0) dx + 1/2 H(dx, dx) + omega_f / 6 |dx|^3`` with
    ``dx = dn + tau Dt`` over ``[0, 1]`` by bisection on the increasing
    derivative, then caps ``tau`` so that ``omega_c / 2 |dx| <= theta_aim``
    and ``dx`` stays inside the oracle's retraction domain.
    """
    dn = np.asarray(dn, dtype=float)
    Dt = np.asarray(Dt, dtype=float)
    if not np.any(Dt):
        return 0.0
    if H is None:
        H = oracle.lagrangian_hessian(p)
    HDt = H @ Dt
    a = float((oracle.gradient() + H @ dn) @ Dt)
    b = float(Dt @ HDt)

    def dphi(t):
        x = dn + t * Dt
        return a + t * b + 0.5 * omega_f * np.linalg.norm(x) * float(x @ Dt)

    if dphi(1.0) <= 0.0:
        tau = 1.0
    elif dphi(0.0) >= 0.0:
        tau = 0.0
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > TAU_TOL:
            mid = 0.5 * (lo + hi)
            if dphi(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)

    radius = 2.0 * theta_aim / omega_c if omega_c > 0 else math.inf
    radius = min(radius, oracle.domain_radius)
    return min(tau, _max_tau_in_ball(dn, Dt, radius))


def update_omega_c(dx, ds, floor=OMEGA_C_FLOOR) -> float:
    """A-posteriori estimate ``2 |ds| / |dx|^2`` of the constraint curvature."""
    nx = float(np.linalg.norm(dx))
    if nx == 0.0:
        raise ValueError("omega_c estimate is undefined for a zero step")
    return max(2.0 * float(np.linalg.norm(ds)) / nx**2, floor)


def update_omega_f(old, f_new, qhat, dx, eta, accepted, cfg: SolverConfig) -> float:
    """Safeguarded a-posteriori estimate of the third-order model error.

    ``accepted`` is the outcome of the decrease test: on failure the estimate
    grows at least by ``b_hat``.  When ``eta >= eta_hat`` it never grows.
    """
    nx = float(np.linalg.norm(dx))
    if nx == 0.0 or old <= 0:
        raise ValueError("omega_f update needs a nonzero step and a positive estimate")
    raw = 6.0 / nx**3 * (f_new - qhat)
    new = min(cfg.b_hi * old, max(cfg.b_lo * old, raw))
    if not accepted:
        new = max(new, cfg.b_hat * old)
    if eta >= cfg.eta_hat:
        new = min(new, old)
    return new


def acceptance_test(dx, ds, f_new, m_at_dx, m_at_dn, cfg: SolverConfig, *, tau=1.0, noise_floor=0.0):
    """Contraction and decrease tests.

    Returns ``(accepted, eta)``; ``eta`` is reported even when the contraction
    test already failed.  A predicted decrease not exceeding ``noise_floor`` in
    magnitude is roundoff: the model is then taken as exact (``eta = 1``).
    """
    nx = float(np.linalg.norm(dx))
    contraction = float(np.linalg.norm(ds)) / nx if nx > 0 else math.inf
    denom = m_at_dx - m_at_dn
    if denom == 0.0 and tau > 0 and noise_floor == 0.0:
        raise DegenerateDenominator("model predicts no decrease for a nonzero tangential step")
    if abs(denom) <= noise_floor or denom == 0.0:
        eta = 1.0
    else:
        eta = (f_new - m_at_dn) / denom
    accepted = contraction <= cfg.theta_acc and eta >= cfg.eta_lo
    return accepted, float(eta)
