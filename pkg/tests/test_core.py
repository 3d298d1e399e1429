import numpy as np
import pytest

from gdcert.core import (CertificateReport, NonFiniteError, ObjectiveProblem, Region, as_vector, default_step,
                         eval_objective, finite_diff_gradient, finite_diff_hessian)
from gdcert.rng import substream


def test_eval_examples(quadratic, cubic, scalar_fact):
    f, g = eval_objective(quadratic, [3.0, 4.0])
    assert f == 12.5 and np.array_equal(g, [3.0, 4.0])
    f, g = eval_objective(cubic, [0.5, 0.25])
    assert f == pytest.approx(0.0625, abs=1e-15)
    np.testing.assert_allclose(g, [0.5, -0.25], atol=1e-15)
    np.testing.assert_allclose(finite_diff_gradient(cubic, [0.5, 0.25], 1e-6), g, atol=1e-8)
    f, g = eval_objective(scalar_fact, [2.0, 1.0])
    assert f == 1.0 and np.array_equal(g, [2.0, 4.0])
    np.testing.assert_allclose(finite_diff_gradient(scalar_fact, [2.0, 1.0], 1e-6), g, atol=1e-8)


def test_eval_errors(quadratic, quartic):
    with pytest.raises(ValueError):
        eval_objective(quadratic, [1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteError):
        eval_objective(quadratic, [np.nan, 0.0])
    with pytest.raises(NonFiniteError):
        eval_objective(quartic, [1e100])
    with pytest.raises(NonFiniteError):
        as_vector([np.inf])


def test_finite_diff_gradient_examples(quadratic, quartic):
    np.testing.assert_allclose(finite_diff_gradient(quadratic, [1.0, 0.0], 1e-5), [1.0, 0.0], atol=1e-9)
    assert finite_diff_gradient(quartic, [2.0], 1e-6)[0] == pytest.approx(-8.0, abs=1e-6)


def test_finite_diff_hessian_examples(quadratic, scalar_fact, cubic):
    np.testing.assert_allclose(finite_diff_hessian(quadratic, [0.3, -2.0]), np.eye(2), atol=1e-6)
    np.testing.assert_allclose(finite_diff_hessian(scalar_fact, [0.0, 0.0]), [[0, -2], [-2, 0]], atol=1e-5)
    np.testing.assert_allclose(finite_diff_hessian(cubic, [0.0, 0.0]), np.zeros((2, 2)), atol=1e-5)


def test_default_step():
    assert default_step([3.0, 4.0]) == pytest.approx(6e-6)


def test_gradient_oracle_on_catalog(any_problem):
    # 100 seeded points per problem
    rng = substream(11, 1)
    for _ in range(100):
        x = 1.5 * rng.standard_normal(any_problem.dimension)
        g = eval_objective(any_problem, x)[1]
        fd = finite_diff_gradient(any_problem, x, 1e-6)
        assert np.linalg.norm(g - fd) <= 1e-5 * (1 + np.linalg.norm(g))


def test_hessian_symmetric_and_matches_oracle(any_problem):
    rng = substream(12, 1)
    for _ in range(20):
        x = rng.standard_normal(any_problem.dimension)
        H = any_problem.hessian(x)
        assert np.allclose(H, H.T, rtol=1e-10, atol=1e-10 * (1 + np.abs(H).max()))
        Hfd = finite_diff_hessian(any_problem, x)
        assert np.array_equal(Hfd, Hfd.T)
        assert np.abs(H - Hfd).max() <= 1e-5 * (1 + np.abs(H).max())


def test_region_validation_and_sampling():
    with pytest.raises(ValueError):
        Region.ball([0, 0], 0.0)
    with pytest.raises(ValueError):
        Region.box([0, 0], [1.0, 0.0])
    with pytest.raises(ValueError):
        Region("disc", np.zeros(2), radius=1.0)
    b = Region.ball([1.0, -1.0], 0.5)
    pts = b.sample(substream(0, 1), 2000)
    assert pts.shape == (2000, 2) and np.all(b.contains(pts))
    box = Region.box([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    pts = box.sample(substream(0, 2), 500)
    assert np.all(box.contains(pts))
    assert box.outer_radius == pytest.approx(np.sqrt(14))
    g = b.grid(21)
    assert np.all(b.contains(g)) and len(g) > 200


def test_certificate_report():
    r = CertificateReport.from_margins("x", [0.5, -1e-10, 2.0], 1e-9, instances=["a", "b", "c"])
    assert r.passed and r.worst == "b" and r.n_checked == 3
    r = CertificateReport.from_margins("x", [-1e-8], 1e-9)
    assert not r.passed
    assert CertificateReport.from_margins("x", [], 0.0).passed
    inv = CertificateReport.invalid("x", "left region")
    assert inv.invalidated and not inv.passed and inv.to_dict()["margin"] == "nan"
    assert not r.rescaled(1.0).passed and r.rescaled(100.0).passed
    assert not inv.rescaled(1e9).passed


def test_custom_problem_fields():
    lin = ObjectiveProblem("linear", 2, lambda x: float(x[0]), lambda x: np.array([1.0, 0.0]))
    assert lin.known_critical_values == () and lin.hessian is None
