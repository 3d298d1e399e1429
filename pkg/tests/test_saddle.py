import numpy as np
import pytest

from gdcert.core import Region
from gdcert.problems import make_problem
from gdcert.saddle import classify_critical_point, escape_monte_carlo, estimate_sigma


def test_classification_examples(scalar_fact, quadratic, cubic):
    r = classify_critical_point(scalar_fact, [0.0, 0.0])
    assert r.classification == "strict_saddle"
    np.testing.assert_allclose(r.eigenvalues, [-2.0, 2.0])
    assert classify_critical_point(quadratic, [0.0, 0.0]).classification == "local_min_candidate"
    assert classify_critical_point(cubic, [0.0, 0.0]).classification == "degenerate"
    assert classify_critical_point(quadratic, [1.0, 0.0]).classification == "not_critical"
    neg = make_problem("negative_quartic")
    assert classify_critical_point(neg, [0.0]).classification == "degenerate"
    with pytest.raises(ValueError):
        classify_critical_point(quadratic, [0.0, 0.0], tol_grad=0.0)


def test_strict_max_and_fd_hessian():
    from gdcert.core import ObjectiveProblem
    p = ObjectiveProblem("cap", 2, lambda x: -float(x @ x), lambda x: -2 * x)
    r = classify_critical_point(p, [0.0, 0.0])
    assert r.classification == "strict_max_candidate"
    assert r.eigenvalues == pytest.approx([-2.0, -2.0], abs=1e-5)


def test_saddle_invariant(scalar_fact):
    res = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.01, 200, seed=1)
    for rep in res.reports:
        if rep.classification == "strict_saddle":
            assert rep.eigenvalues[0] <= -rep.tol_eig and rep.grad_norm <= rep.tol_grad
        if rep.grad_norm <= 1e-8:
            x, y = rep.point
            assert abs(x * y - 1) <= 1e-4 or np.hypot(x, y) <= 1e-4


def test_escape_fraction(scalar_fact, quadratic):
    res = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.01, 1000, seed=0)
    assert res.saddle_fraction <= 0.01 and res.n_trials == 1000
    assert sum(res.counts.values()) == 1000
    at0 = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.01, 0, initial_points=[[0.0, 0.0]] * 4)
    assert at0.saddle_fraction == 1.0
    q = escape_monte_carlo(quadratic, Region.box([0, 0], [3.0, 3.0]), 0.5, 50, seed=0)
    assert q.saddle_fraction == 0.0 and q.counts["local_min_candidate"] == 50


def test_nonconvergent_counted(scalar_fact):
    res = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.6, 50, seed=0, max_iter=1000)
    assert res.n_nonconvergent > 0
    assert sum(res.counts.values()) == 50
    assert "did not converge" in res.to_certificate(0.01).reason


def test_escape_deterministic(scalar_fact):
    a = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.01, 50, seed=5)
    b = escape_monte_carlo(scalar_fact, Region.ball([0, 0], 2.0), 0.01, 50, seed=5)
    assert np.array_equal(a.initial_points, b.initial_points) and a.counts == b.counts


def test_sigma_examples(quadratic, quartic):
    est = estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "continuous", n_samples=100, seed=0)
    assert est.max_length <= 1.0 + 1e-9 and est.max_length > 0.9
    assert np.all(np.diff(est.running_max) >= 0)
    est = estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "continuous_T", horizon=1.0, n_samples=100,
                         min_critical_value=0.0, sup_f=0.5)
    assert est.bound == pytest.approx(np.sqrt(0.5))
    assert est.max_length <= 1 - np.exp(-1) + 1e-6 and est.report.passed
    est = estimate_sigma(quartic, Region.ball([1.0], 0.5), "continuous", n_samples=10)
    assert est.blowup and est.max_length == np.inf and est.report.invalidated


def test_sigma_discrete_and_errors(quadratic):
    est = estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "discrete", alpha_bar=0.5, n_samples=30)
    assert est.max_length <= 1.0 + 1e-9
    with pytest.raises(ValueError):
        estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "discrete", alpha_bar=0.0)
    with pytest.raises(ValueError):
        estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "continuous_T")
    with pytest.raises(ValueError):
        estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "bogus")


def test_sigma_prefix_stable(quadratic):
    a = estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "continuous", n_samples=10, seed=2)
    b = estimate_sigma(quadratic, Region.ball([0, 0], 1.0), "continuous", n_samples=30, seed=2)
    assert np.array_equal(a.lengths, b.lengths[:10]) and b.max_length >= a.max_length
