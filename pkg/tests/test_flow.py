import numpy as np
import pytest
from scipy.integrate import solve_ivp

from gdcert.flow import arc_length, energy_identity_residual, integrate_flow
from gdcert.problems import random_factorization


def test_quadratic_closed_form(quadratic):
    fl = integrate_flow(quadratic, [1.0, 0.0], horizon=5.0)
    assert fl.termination == "horizon" and fl.t_end == 5.0
    np.testing.assert_allclose(fl.states[:, 0], np.exp(-fl.times), atol=1e-6)
    t = np.linspace(0, 5, 301)
    np.testing.assert_allclose(fl(t)[:, 0], np.exp(-t), atol=1e-6)
    assert arc_length(fl) == pytest.approx(1 - np.exp(-5), abs=1e-6)
    assert energy_identity_residual(fl, quadratic) <= 1e-6
    assert fl.energy == pytest.approx(0.5 * (1 - np.exp(-10)), abs=1e-6)


def test_critical_initial_point(cubic):
    fl = integrate_flow(cubic, [0.0, 0.0], horizon=3.0)
    assert fl.termination == "converged" and arc_length(fl) == 0.0
    assert energy_identity_residual(fl, cubic) == 0.0
    np.testing.assert_array_equal(fl(np.array([0.0])), [[0.0, 0.0]])


def test_negative_quartic_blowup(quartic):
    fl = integrate_flow(quartic, [1.0])
    assert fl.termination == "blowup" and fl.t_end < 0.5
    t = np.linspace(0, 0.45, 400)
    exact = (1 - 2 * t) ** -0.5
    assert np.max(np.abs(fl(t)[:, 0] - exact) / exact) <= 1e-4


def test_step_collapse_is_blowup(quartic):
    fl = integrate_flow(quartic, [1.0], horizon=1.0, escape_radius=np.inf)
    assert fl.termination in ("blowup", "nonfinite") and fl.t_end < 0.5 + 1e-8


def test_tolerance_refinement_reduces_error(quadratic, quartic):
    e = []
    for tol in (1e-6, 5e-7, 1e-8):
        fl = integrate_flow(quadratic, [1.0, 0.0], horizon=5.0, rel_tol=tol)
        e.append(np.max(np.abs(fl.states[:, 0] - np.exp(-fl.times))))
    assert e[2] < e[0]
    q = []
    for tol in (1e-6, 1e-9):
        fl = integrate_flow(quartic, [1.0], rel_tol=tol)
        t = np.linspace(0, 0.4, 50)
        q.append(np.max(np.abs(fl(t)[:, 0] - (1 - 2 * t) ** -0.5)))
    assert q[1] < q[0]


def test_scalar_factorization_polyline(scalar_fact):
    fl = integrate_flow(scalar_fact, [2.0, 1.0], horizon=20.0)
    assert np.isfinite(fl.arc_length)
    assert abs(fl.polyline_length() - fl.arc_length) <= 1e-4


def test_matrix_factorization_energy():
    p, z0 = random_factorization(np.random.default_rng(42), 2, 2, 1)
    fl = integrate_flow(p, z0, horizon=10.0)
    assert energy_identity_residual(fl, p) <= 1e-5


def test_flow_invariants(any_problem):
    rng = np.random.default_rng(9)
    for _ in range(3):
        x0 = 0.5 * rng.standard_normal(any_problem.dimension)
        fl = integrate_flow(any_problem, x0, horizon=5.0, rel_tol=1e-9, escape_radius=50.0)
        assert np.all(np.diff(fl.times) > 0)
        assert np.all(np.diff(fl.f_values) <= 10 * 1e-9 * (1 + np.abs(fl.f_values[:-1])))
        assert fl.arc_length >= np.linalg.norm(fl.states[-1] - fl.states[0]) - 1e-9
        drop = fl.f_values[0] - fl.f_values[-1]
        assert fl.arc_length <= np.sqrt(fl.t_end * drop) * (1 + 1e-6) + 1e-9


def test_against_solve_ivp(scalar_fact, cubic):
    # an independent integrator as oracle
    for prob, x0, T in ((scalar_fact, [2.0, 1.0], 3.0), (cubic, [0.5, -0.5], 2.0)):
        fl = integrate_flow(prob, x0, horizon=T, rel_tol=1e-10)
        ref = solve_ivp(lambda t, x: -prob.gradient(x), (0, T), x0, method="DOP853", rtol=1e-12, atol=1e-13,
                        dense_output=True)
        t = np.linspace(0, T, 97)
        np.testing.assert_allclose(fl(t), ref.sol(t).T, atol=1e-7)


def test_dense_output_bounds(quadratic):
    fl = integrate_flow(quadratic, [1.0, 0.0], horizon=1.0)
    with pytest.raises(ValueError):
        fl(1.5)
    np.testing.assert_allclose(fl.derivative(np.array([0.3])), -fl(np.array([0.3])), atol=1e-6)


def test_converges_at_infinite_horizon(quadratic, scalar_fact):
    fl = integrate_flow(quadratic, [0.5, 0.3])
    assert fl.termination == "converged" and len(fl.times) < 500
    fl = integrate_flow(scalar_fact, [1e-3, 2e-3])
    assert fl.termination == "converged"
    assert abs(fl.states[-1].prod() - 1) < 1e-6


def test_argument_errors(quadratic):
    with pytest.raises(ValueError):
        integrate_flow(quadratic, [1.0, 0.0], horizon=0.0)
    with pytest.raises(ValueError):
        integrate_flow(quadratic, [1.0, 0.0], rel_tol=1e-14)
    with pytest.raises(ValueError):
        integrate_flow(quadratic, [1.0, 0.0], rel_tol=0.1)
