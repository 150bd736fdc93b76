import math

import numpy as np
import pytest
import scipy.linalg
import scipy.optimize
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from manifold_sqp.exceptions import (
    DegenerateDenominator,
    MaxIterExceeded,
    StallDetected,
    UpdateNotDefined,
)
from manifold_sqp.kkt import tangential_step
from manifold_sqp.rod import RodConfig, helix_initial, rod_oracle_factory
from manifold_sqp.sqp import (
    EuclideanProblem,
    SolverConfig,
    Stratification,
    StratificationKind,
    acceptance_test,
    composite_step_solve,
    compute_nu,
    compute_tau,
    cubic_model,
    hybrid_model,
    local_sqp_solve,
    quadratic_model,
    simplified_normal_step,
    update_omega_c,
    update_omega_f,
)

from conftest import random_rod_state, unit
from sphere_problem import SphereOracle, lagrangian_hessian_fd, random_sphere_problem

CFG = SolverConfig()


def quadratic_problem(A, b, G, g):
    """min 1/2 x.G x + g.x  s.t.  A x = b."""
    return EuclideanProblem(
        fun=lambda x: 0.5 * x @ G @ x + g @ x,
        grad=lambda x: G @ x + g,
        hess=lambda x: G,
        cons=lambda x: A @ x - b,
        jac=lambda x: A,
        cons_hess=lambda x, p: np.zeros_like(G),
    )


# f = (1 - x)^2 + 100 (y - x^2)^2 on the unit circle
ROSENBROCK_CIRCLE = EuclideanProblem(
    fun=lambda z: (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2,
    grad=lambda z: np.array([-2 * (1 - z[0]) - 400 * z[0] * (z[1] - z[0] ** 2), 200 * (z[1] - z[0] ** 2)]),
    hess=lambda z: np.array([[2 - 400 * (z[1] - 3 * z[0] ** 2), -400 * z[0]], [-400 * z[0], 200.0]]),
    cons=lambda z: np.array([z @ z - 1]),
    jac=lambda z: 2 * z.reshape(1, 2),
    cons_hess=lambda z, p: 2 * p[0] * np.eye(2),
)

# scalar constraint u1^2 + u2 with a linear objective
PARABOLA = EuclideanProblem(
    fun=lambda x: x[0] + x[0] ** 2,
    grad=lambda x: np.array([1 + 2 * x[0], 0.0]),
    hess=lambda x: np.diag([2.0, 0.0]),
    cons=lambda x: np.array([x[0] ** 2 + x[1]]),
    jac=lambda x: np.array([[2 * x[0], 1.0]]),
    cons_hess=lambda x, p: np.diag([2 * p[0], 0.0]),
)


# -- models ------------------------------------------------------------------

def test_quadratic_model_examples():
    lin = EuclideanProblem(
        fun=lambda x: x[0] + x[0] ** 2, grad=lambda x: np.array([1 + 2 * x[0], 0.0]),
        hess=lambda x: np.diag([2.0, 0.0]), cons=lambda x: np.array([x[1]]),
        jac=lambda x: np.array([[0.0, 1.0]]), cons_hess=lambda x, p: np.zeros((2, 2)),
    )
    o = lin(np.zeros(2))
    p = np.array([0.3])
    assert quadratic_model(o, p, np.zeros(2)) == o.f0
    assert quadratic_model(o, p, np.array([1.0, 0.0])) == pytest.approx(2.0)


def test_quadratic_model_is_exact_for_quadratic_problems(rng):
    G = rng.standard_normal((4, 4))
    G = G + G.T
    A = rng.standard_normal((2, 4))
    prob = quadratic_problem(A, rng.standard_normal(2), G, rng.standard_normal(4))
    o = prob(rng.standard_normal(4))
    p = rng.standard_normal(2)
    for _ in range(5):
        dx = rng.standard_normal(4)
        expected = o.lagrangian(dx, p)
        got = quadratic_model(o, p, dx) + p @ (o.c0 + o.jacobian() @ dx)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_hybrid_model_examples(rng):
    o = PARABOLA(np.array([0.0, 0.0]))  # feasible: c(0) = 0
    p = np.array([0.4])
    dt = np.array([0.7, 0.0])
    assert hybrid_model(o, p, 1.0, np.zeros(2), dt) == pytest.approx(quadratic_model(o, p, dt))
    o = PARABOLA(np.array([0.3, 0.5]))
    dn = np.array([0.1, -0.2])
    nu = 0.6
    expected = o.lagrangian(dn, p) - (1 - nu) * p @ o.c0
    assert hybrid_model(o, p, nu, dn, np.zeros(2)) == pytest.approx(expected)


def test_hybrid_minus_quadratic_is_constant_in_dt(small_rod, rng):
    factory = rod_oracle_factory(small_rod, "projection", "exponential")
    o = factory(random_rod_state(small_rod, rng))
    p = rng.standard_normal(small_rod.n_constraints)
    Z = scipy.linalg.null_space(o.jacobian().toarray())
    dn = 0.01 * rng.standard_normal(o.dim)
    diffs = []
    for _ in range(10):
        dt = Z @ rng.standard_normal(Z.shape[1]) * 0.1
        diffs.append(hybrid_model(o, p, 0.5, dn, dt) - quadratic_model(o, p, dn + dt))
    assert np.ptp(diffs) <= 1e-10 * max(1.0, abs(diffs[0]))


def test_cubic_model_examples():
    assert cubic_model(1.5, 0.0, np.ones(3)) == 1.5
    assert cubic_model(1.0, 6.0, np.array([1.0, 0.0])) == pytest.approx(2.0)
    assert cubic_model(1.0, 1.0, [0.5]) < cubic_model(1.0, 2.0, [0.5])
    with pytest.raises(ValueError):
        cubic_model(1.0, -1.0, [1.0])


def test_simplified_normal_step_examples(rng):
    o = PARABOLA(np.zeros(2))
    np.testing.assert_allclose(simplified_normal_step(o, None, np.array([1.0, 0.0])), [0.0, -1.0], atol=1e-15)
    A = rng.standard_normal((2, 4))
    lin = quadratic_problem(A, np.ones(2), np.eye(4), np.zeros(4))(rng.standard_normal(4))
    assert np.linalg.norm(simplified_normal_step(lin, None, rng.standard_normal(4))) < 1e-14


def test_simplified_normal_step_is_second_order_on_rod(small_rod, rng):
    o = rod_oracle_factory(small_rod)(random_rod_state(small_rod, rng))
    dx = 0.05 * unit(rng.standard_normal(o.dim))
    big = np.linalg.norm(simplified_normal_step(o, None, dx))
    small = np.linalg.norm(simplified_normal_step(o, None, dx / 10))
    assert 80 < big / small < 120


# -- damping and estimates ---------------------------------------------------

def test_compute_nu_examples():
    assert compute_nu(2.0, 0.5, 1.0, 1.0) == pytest.approx(0.5)
    assert compute_nu(0.0, 0.5, 0.8, 10.0) == 1.0
    assert compute_nu(2.0, 0.5, 1.0, 0.1) == 1.0
    assert compute_nu(2.0, 0.5, 1.0, np.array([0.6, 0.8])) == pytest.approx(0.5)
    assert compute_nu(0.0, 0.5, 1.0, 2.0, domain_cap=0.5) == pytest.approx(0.25)


# f = -x1 + x1^2 / 2, c = x2: Dt = (1, 0), f'(Dt) = -1, H(Dt, Dt) = 1
TAU_PROBLEM = EuclideanProblem(
    fun=lambda x: -x[0] + 0.5 * x[0] ** 2, grad=lambda x: np.array([x[0] - 1, 0.0]),
    hess=lambda x: np.diag([1.0, 0.0]), cons=lambda x: np.array([x[1]]),
    jac=lambda x: np.array([[0.0, 1.0]]), cons_hess=lambda x, p: np.zeros((2, 2)),
)


def test_compute_tau_examples():
    o = TAU_PROBLEM(np.zeros(2))
    p, z, Dt = np.zeros(1), np.zeros(2), np.array([1.0, 0.0])
    assert compute_tau(o, p, 0.0, 0.0, 0.5, z, Dt) == 1.0
    assert compute_tau(o, p, 2.0, 0.0, 0.5, z, Dt) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-11)
    assert compute_tau(o, p, 0.0, 4.0, 0.5, z, Dt) == pytest.approx(0.25, abs=1e-14)
    assert compute_tau(o, p, 2.0, 0.0, 0.5, z, np.zeros(2)) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.1, 10), st.floats(0.0, 50), st.floats(-1, 1), st.floats(0.05, 3)
)
def test_compute_tau_minimizes_the_cubic(curv, omega_f, dn0, scale):
    # 1-d objective along Dt = (scale, 0) with a normal offset dn = (0, dn0)
    prob = EuclideanProblem(
        fun=lambda x: -curv * x[0] + 0.5 * curv * x[0] ** 2, grad=lambda x: np.array([curv * (x[0] - 1), 0.0]),
        hess=lambda x: np.diag([curv, curv]), cons=lambda x: np.array([x[1]]),
        jac=lambda x: np.array([[0.0, 1.0]]), cons_hess=lambda x, p: np.zeros((2, 2)),
    )
    o = prob(np.zeros(2))
    H = o.lagrangian_hessian(np.zeros(1))
    dn, Dt = np.array([0.0, dn0]), np.array([scale, 0.0])
    tau = compute_tau(o, np.zeros(1), omega_f, 0.0, 0.5, dn, Dt)
    grid = np.linspace(0, 1, 2001)

    def phi(t):
        x = dn + t * Dt
        return o.gradient() @ x + 0.5 * x @ H @ x + omega_f / 6 * np.linalg.norm(x) ** 3

    assert phi(tau) <= min(phi(t) for t in grid) + 1e-9


def test_update_omega_c_examples():
    assert update_omega_c(np.array([0.2, 0.0]), np.array([0.0, 0.02])) == pytest.approx(1.0)
    assert update_omega_c(np.ones(2), np.zeros(2)) == 1e-12
    with pytest.raises(ValueError):
        update_omega_c(np.zeros(2), np.ones(2))


def _omega_f(old, raw, eta, accepted):
    dx = np.array([1.0, 0.0])  # |dx|^3 = 1, so f_new - qhat = raw / 6
    return update_omega_f(old, raw / 6.0, 0.0, dx, eta, accepted, CFG)


def test_update_omega_f_examples():
    assert _omega_f(1.0, 10.0, 0.5, True) == pytest.approx(4.0)
    assert _omega_f(1.0, -5.0, 0.5, True) == pytest.approx(0.25)
    assert _omega_f(1.0, 1.5, 0.1, False) == pytest.approx(2.0)
    assert _omega_f(1.0, 3.0, 0.95, True) == pytest.approx(1.0)


@given(
    st.floats(1e-6, 1e6), st.floats(-1e8, 1e8), st.floats(-10, 10), st.booleans()
)
def test_update_omega_f_safeguards(old, raw, eta, accepted):
    assume(accepted or eta < CFG.eta_lo)
    new = _omega_f(old, raw * old, eta, accepted)
    assert CFG.b_lo * old * (1 - 1e-12) <= new <= CFG.b_hi * old * (1 + 1e-12)
    if not accepted:
        assert new >= CFG.b_hat * old * (1 - 1e-12)
    if eta >= CFG.eta_hat:
        assert new <= old


def test_acceptance_examples():
    dx = np.array([1.0, 0.0])
    ok, eta = acceptance_test(dx, np.array([0.0, 0.1]), -1.0, -1.0, 0.0, CFG)
    assert ok and eta == pytest.approx(1.0)
    ok, eta = acceptance_test(dx, np.array([0.0, 0.9]), -1.0, -1.0, 0.0, CFG)
    assert not ok and eta == pytest.approx(1.0)
    ok, eta = acceptance_test(dx, np.array([0.0, 0.1]), 0.5, -1.0, 0.0, CFG)
    assert not ok and eta == pytest.approx(-0.5)
    with pytest.raises(DegenerateDenominator):
        acceptance_test(dx, np.zeros(2), 0.0, 1.0, 1.0, CFG, tau=0.5)
    assert acceptance_test(dx, np.zeros(2), 0.0, 1.0, 1.0, CFG, tau=0.0) == (True, 1.0)
    # predicted decrease below the roundoff floor counts as an exact model
    assert acceptance_test(dx, np.zeros(2), 5.0, -1e-14, 0.0, CFG, noise_floor=1e-12) == (True, 1.0)


def test_solver_config_validation():
    SolverConfig()
    for bad in [
        dict(theta_aim=1.0), dict(theta_acc=0.0), dict(rho_ellbow=0.0), dict(eta_lo=1.0),
        dict(eta_lo=0.5, eta_hat=0.4), dict(b_lo=1.0), dict(b_hat=1.0), dict(b_hat=5.0),
        dict(omega_c_init=-1.0), dict(omega_f_init=0.0), dict(tol_dx=0.0), dict(max_iter=-1),
    ]:
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# -- stratifications -----------------------------------------------------------

@pytest.mark.parametrize("twist", [None, (0.6, -0.2)])
def test_sphere_stratification(twist, rng):
    s = Stratification(StratificationKind.SPHERE_PROJECTION_INVERSE, twist)
    assert s.second_order_consistent is (twist is None)
    base = unit(rng.standard_normal(3))
    assert not np.any(s.chart(base, base))
    np.testing.assert_allclose(s.transition(base, np.zeros(2)), 0, atol=1e-15)
    e = 1e-4
    for a in np.eye(2):
        d1 = (s.transition(base, e * a) - s.transition(base, -e * a)) / (2 * e)
        np.testing.assert_allclose(d1, a, atol=1e-7)
    a, b = rng.standard_normal(2), rng.standard_normal(2)
    T = lambda w: s.transition(base, w)  # noqa: E731
    fd = (T(e * (a + b)) - T(e * (a - b)) - T(e * (b - a)) + T(-e * (a + b))) / (4 * e * e)
    np.testing.assert_allclose(s.second_derivative(base, a, b), fd, atol=1e-6)


def test_identity_stratification():
    s = Stratification()
    assert s.second_order_consistent
    np.testing.assert_array_equal(s.chart([1.0, 2.0], [1.5, 2.0]), [0.5, 0.0])
    assert not np.any(s.second_derivative([0.0], [1.0], [1.0]))


def test_hessian_discrepancy_identity(rng):
    twist = (0.8, -0.5)
    s = Stratification(StratificationKind.SPHERE_PROJECTION_INVERSE, twist)
    for _ in range(3):
        data = random_sphere_problem(rng)
        o = SphereOracle(**data)
        p = rng.standard_normal(1)
        gap = lagrangian_hessian_fd(o, p, "exponential", twist) - lagrangian_hessian_fd(o, p, "projection", None)
        lprime = o.lagrangian_gradient(p)
        E = np.eye(2)
        pred = np.array([[lprime @ s.second_derivative(o.v, E[i], E[j]) for j in range(2)] for i in range(2)])
        np.testing.assert_allclose(gap, pred, atol=1e-5)


# -- solvers -------------------------------------------------------------------

def test_local_sqp_quadratic_program_one_step(rng):
    G = rng.standard_normal((5, 5))
    G = G @ G.T + np.eye(5)
    A = rng.standard_normal((2, 5))
    prob = quadratic_problem(A, rng.standard_normal(2), G, rng.standard_normal(5))
    res = local_sqp_solve(prob, rng.standard_normal(5), tol=1e-10)
    assert res.converged and res.iterations == 1
    np.testing.assert_allclose(A @ res.x, prob.cons(np.zeros(5)) * -1, atol=1e-10)


def test_local_sqp_stationary_start():
    prob = quadratic_problem(np.array([[1.0, 1.0]]), np.array([2.0]), np.eye(2), np.zeros(2))
    res = local_sqp_solve(prob, np.array([1.0, 1.0]))
    assert res.converged and res.iterations == 0 and res.history == []


def test_local_sqp_update_not_defined():
    prob = quadratic_problem(np.array([[1.0, 1.0]]), np.array([2.0]), np.eye(2), np.zeros(2))
    tight = EuclideanProblem(*[getattr(prob, f) for f in ("fun", "grad", "hess", "cons", "jac", "cons_hess")], domain_radius=0.1)
    with pytest.raises(UpdateNotDefined):
        local_sqp_solve(tight, np.array([5.0, -5.0]))


def test_composite_stationary_start():
    prob = quadratic_problem(np.array([[1.0, 1.0]]), np.array([2.0]), np.eye(2), np.zeros(2))
    res = composite_step_solve(prob, np.array([1.0, 1.0]))
    assert res.converged and res.iterations == 0 and res.history == []


def test_composite_matches_reference_optimizer():
    res = composite_step_solve(ROSENBROCK_CIRCLE, np.array([-0.6, 0.8]))
    ref = scipy.optimize.minimize(
        ROSENBROCK_CIRCLE.fun, np.array([-0.6, 0.8]), method="SLSQP",
        constraints=[{"type": "eq", "fun": ROSENBROCK_CIRCLE.cons}], options={"ftol": 1e-14},
    )
    assert res.converged
    np.testing.assert_allclose(res.x, ref.x, atol=1e-6)
    assert len(res.history) >= res.iterations


def test_composite_on_sphere_with_hybrid_model(rng):
    data = random_sphere_problem(rng)
    factory = lambda x: SphereOracle(**{**data, "v": x.spheres[0]}, model_kind="exponential", twist=(0.5, 0.5))  # noqa: E731
    x0 = SphereOracle(**data).x
    res = composite_step_solve(factory, x0, SolverConfig(hybrid_model=True))
    assert res.converged
    o = factory(res.x)
    assert o.feasibility() <= 1e-10
    assert np.linalg.norm(o.lagrangian_gradient(res.p)) <= 1e-8


def test_composite_max_iter_carries_partial_result():
    cfg = RodConfig(n=20, g=(0, 0, 1000.0))
    with pytest.raises(MaxIterExceeded) as err:
        composite_step_solve(rod_oracle_factory(cfg), helix_initial(cfg), SolverConfig(max_iter=2))
    res = err.value.result
    assert res.iterations == 2 and not res.converged
    assert sum(r.accepted for r in res.history) == 2


def test_composite_stall_guard():
    cfg = RodConfig(n=20, g=(0, 0, 1000.0))
    with pytest.raises(StallDetected) as err:
        composite_step_solve(rod_oracle_factory(cfg), helix_initial(cfg), SolverConfig(stall_limit=1))
    assert len(err.value.result.history) == 1 and not err.value.result.history[0].accepted


def test_hybrid_tangential_minimizer_matches_quadratic(small_rod, rng):
    o = rod_oracle_factory(small_rod, "exponential", "projection")(random_rod_state(small_rod, rng))
    p = rng.standard_normal(small_rod.n_constraints)
    from manifold_sqp.kkt import hessian_regularize

    H = hessian_regularize(o.lagrangian_hessian(p), o.jacobian()).matrix
    dn = 0.02 * rng.standard_normal(o.dim)
    dt, _ = tangential_step(H, o.jacobian(), o.gradient() + H @ dn)
    Z = scipy.linalg.null_space(o.jacobian().toarray())
    q = lambda z: hybrid_model(o, p, 0.7, dn, Z @ z, H=H)  # noqa: E731
    k = Z.shape[1]
    # the model is exactly quadratic in z, so unit central differences are exact
    E = np.eye(k)
    grad = np.array([(q(E[i]) - q(-E[i])) / 2 for i in range(k)])
    q0 = q(np.zeros(k))
    hess = np.array([[(q(E[i] + E[j]) - q(E[i]) - q(E[j]) + q0) for j in range(k)] for i in range(k)])
    z = np.linalg.solve(0.5 * (hess + hess.T), -grad)
    np.testing.assert_allclose(Z @ z, dt, atol=1e-7 * max(1, np.linalg.norm(dt)))
