"""Local SQP and the globalized affine covariant composite step method."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from ..exceptions import MaxIterExceeded, StallDetected, UpdateNotDefined
from ..kkt import (
    SaddleFactorization,
    SaddlePointSystem,
    hessian_regularize,
    lagrange_multiplier,
    normal_step,
    solve_saddle,
    tangential_step,
)
from .models import cubic_model, hybrid_model, quadratic_model, simplified_normal_step
from .steps import (
    SolverConfig,
    acceptance_test,
    compute_nu,
    compute_tau,
    update_omega_c,
    update_omega_f,
)

__all__ = ["IterationRecord", "SolverState", "SolveResult", "local_sqp_solve", "composite_step_solve"]

log = logging.getLogger(__name__)

# relative size of the predicted decrease below which it is considered roundoff
ROUNDOFF_FACTOR = 100 * np.finfo(float).eps


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    nu: float
    tau: float
    norm_dn: float
    norm_dt: float
    norm_dx: float
    norm_ds: float
    omega_c: float
    omega_f: float
    f_value: float
    feasibility_inf_norm: float
    eta: float
    accepted: bool

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverState:
    x: object
    p: np.ndarray | None = None
    omega_c: float = 0.0
    omega_f: float = 1.0
    history: list = field(default_factory=list)


@dataclass
class SolveResult:
    """Outcome of a solve.

    ``iterations`` counts accepted steps; ``iterates`` holds the base points
    from ``x0`` to ``x``; ``history`` has one record per trial step.
    """

    x: object
    p: np.ndarray | None
    history: list
    iterations: int
    converged: bool
    iterates: list
    omega_c: float = math.nan
    omega_f: float = math.nan
    message: str = ""


def _kkt_factors(oracle):
    C = oracle.jacobian()
    M = oracle.metric()
    mfac = SaddleFactorization(M, C, oracle.kkt_ordering)
    mfac.check()
    return C, M, mfac


def local_sqp_solve(oracle_factory, x0, tol=1e-10, max_iter=50) -> SolveResult:
    """Undamped SQP: ``x <- R_x(dx)`` with the full Lagrange-Newton step.

    The multiplier entering the Lagrangian Hessian is the least-squares
    estimate at each iterate.  Raises :class:`UpdateNotDefined` when a step
    leaves the retraction domain and :class:`MaxIterExceeded` after
    ``max_iter`` steps without ``|dx| <= tol``.
    """
    x = x0
    history, iterates = [], [x0]
    p = None
    for k in range(max_iter + 1):
        oracle = oracle_factory(x)
        C, M, mfac = _kkt_factors(oracle)
        g = oracle.gradient()
        _, p = lagrange_multiplier(C, M, g, factor=mfac)
        H = oracle.lagrangian_hessian(p)
        sol = solve_saddle(SaddlePointSystem(H, C, g + C.T @ p, oracle.c0), ordering=oracle.kkt_ordering)
        dx = sol.step
        ndx = oracle.norm(dx)
        if ndx <= tol:
            return SolveResult(x, p, history, k, True, iterates)
        if k == max_iter:
            break
        if not oracle.in_domain(dx):
            raise UpdateNotDefined(f"step of length {ndx:.3g} leaves the retraction domain")
        dn = normal_step(C, M, oracle.c0, factor=mfac)
        history.append(
            IterationRecord(
                k, 1.0, 1.0, oracle.norm(dn), oracle.norm(dx - dn), ndx, 0.0,
                math.nan, math.nan, oracle.f0, oracle.feasibility(), math.nan, True,
            )
        )
        x = oracle.retract(dx)
        iterates.append(x)
    result = SolveResult(x, p, history, max_iter, False, iterates, message="maximum iterations reached")
    raise MaxIterExceeded(result.message, result)


def composite_step_solve(oracle_factory, x0, cfg: SolverConfig | None = None, callback=None) -> SolveResult:
    """Affine covariant composite step method.

    Each outer iteration computes the normal step, the multiplier estimate and
    a regularized Lagrangian Hessian once; the inner loop then damps the
    normal and tangential steps with the current Lipschitz estimates until a
    trial ``dx + ds`` passes the contraction and decrease tests.  Estimates
    are updated after every trial.

    ``callback(record)`` is called for every trial.  Raises
    :class:`MaxIterExceeded` or :class:`StallDetected` with the partial
    result attached.
    """
    cfg = cfg or SolverConfig()
    state = SolverState(x=x0, omega_c=cfg.omega_c_init, omega_f=cfg.omega_f_init)
    iterates = [x0]
    last_dx = math.inf
    trial = 0
    accepted_steps = 0

    def result(converged, message=""):
        return SolveResult(
            state.x, state.p, state.history, accepted_steps, converged, iterates,
            state.omega_c, state.omega_f, message,
        )

    while True:
        oracle = oracle_factory(state.x)
        C, M, mfac = _kkt_factors(oracle)
        g = oracle.gradient()
        Dn = normal_step(C, M, oracle.c0, factor=mfac)
        _, p = lagrange_multiplier(C, M, g, factor=mfac)
        state.p = p
        reg = hessian_regularize(oracle.lagrangian_hessian(p), C, oracle.kkt_ordering)
        H, hfac = reg.matrix, reg.factor
        if reg.shift > 0:
            log.debug("Hessian regularized with shift %.3g", reg.shift)
        lgrad = g + C.T @ p

        feas = oracle.feasibility()
        if feas <= cfg.tol_feas:
            if last_dx <= cfg.tol_dx:
                return result(True)
            Dt_full, _ = tangential_step(H, C, lgrad + H @ Dn, factor=hfac)
            if oracle.norm(Dn + Dt_full) <= cfg.tol_dx:
                return result(True)
        if accepted_steps >= cfg.max_iter:
            raise MaxIterExceeded("maximum iterations reached", result(False, "maximum iterations reached"))

        use_hybrid = cfg.hybrid_model or not oracle.stratification.second_order_consistent
        noise = ROUNDOFF_FACTOR * (1.0 + abs(oracle.f0) + abs(float(p @ oracle.c0)))
        rejections = 0
        while True:
            nu = compute_nu(state.omega_c, cfg.theta_aim, cfg.rho_ellbow, oracle.norm(Dn), oracle.domain_radius)
            dn = nu * Dn
            Dt, _ = tangential_step(H, C, lgrad + H @ dn, factor=hfac)
            tau = compute_tau(oracle, p, state.omega_f, state.omega_c, cfg.theta_aim, dn, Dt, H=H)
            dt = tau * Dt
            dx = dn + dt
            ndx = oracle.norm(dx)
            if ndx == 0.0:
                # nothing left to do at machine precision
                return result(True, "zero step")
            ds = simplified_normal_step(oracle, M, dx, factor=mfac)
            # retractions of the supported problems are global, so sigma = 1
            f_new = oracle.objective(dx + ds)
            if use_hybrid:
                q_dx = hybrid_model(oracle, p, nu, dn, dt, H=H)
                q_dn = hybrid_model(oracle, p, nu, dn, np.zeros_like(dt), H=H)
            else:
                q_dx = quadratic_model(oracle, p, dx, H=H)
                q_dn = quadratic_model(oracle, p, dn, H=H)
            m_dx = cubic_model(q_dx, state.omega_f, dx)
            m_dn = cubic_model(q_dn, state.omega_f, dn)
            accepted, eta = acceptance_test(dx, ds, f_new, m_dx, m_dn, cfg, tau=tau, noise_floor=noise)
            decrease_ok = eta >= cfg.eta_lo

            state.omega_c = update_omega_c(dx, ds)
            state.omega_f = update_omega_f(state.omega_f, f_new, q_dx, dx, eta, decrease_ok, cfg)
            new_x = oracle.retract(dx + ds) if accepted else None
            new_feas = oracle.feasibility(dx + ds) if accepted else math.nan
            record = IterationRecord(
                trial, nu, tau, oracle.norm(dn), oracle.norm(dt), ndx, oracle.norm(ds),
                state.omega_c, state.omega_f, f_new if accepted else oracle.f0,
                new_feas if accepted else feas, eta, accepted,
            )
            state.history.append(record)
            trial += 1
            if callback is not None:
                callback(record)
            if accepted:
                break
            rejections += 1
            if rejections >= cfg.stall_limit:
                msg = f"{rejections} consecutive rejected trial steps"
                raise StallDetected(msg, result(False, msg))

        state.x = new_x
        iterates.append(new_x)
        accepted_steps += 1
        last_dx = ndx
