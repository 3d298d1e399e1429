import numpy as np
import pytest

from gdcert.core import ObjectiveProblem, Region
from gdcert.lipschitz import estimate_constants


def test_quadratic_ball(quadratic):
    est = estimate_constants(quadratic, Region.ball([0, 0], 2.0), n_samples=10_000, seed=0)
    assert 2.0 <= est.L <= 2.4
    assert 1.0 <= est.M <= 1.2
    assert est.inflation == 1.2


@pytest.mark.parametrize("r", [0.1, 1.0, 5.0])
def test_quadratic_M_any_radius(quadratic, r):
    est = estimate_constants(quadratic, Region.ball([1.0, -1.0], r), n_samples=1000, seed=4)
    assert 1.0 <= est.M <= 1.2 + 1e-12


def test_linear_objective():
    lin = ObjectiveProblem("linear", 2, lambda x: float(x[0]), lambda x: np.array([1.0, 0.0]))
    est = estimate_constants(lin, Region.box([0, 0], [3.0, 1.0]), n_samples=500)
    assert est.L == pytest.approx(1.2)
    assert est.M == 1e-12


def test_cubic_reproducible(cubic):
    a = estimate_constants(cubic, Region.ball([0, 0], 0.8), n_samples=2000, seed=5)
    b = estimate_constants(cubic, Region.ball([0, 0], 0.8), n_samples=2000, seed=5)
    assert (a.L, a.M) == (b.L, b.M) and np.isfinite(a.L) and np.isfinite(a.M)


def test_nondecreasing_in_samples(scalar_fact):
    reg = Region.ball([0, 0], 2.0)
    vals = [estimate_constants(scalar_fact, reg, n_samples=n, seed=1) for n in (10, 100, 1000, 3000)]
    assert all(x.L <= y.L and x.M <= y.M for x, y in zip(vals, vals[1:]))


def test_errors(quadratic):
    with pytest.raises(ValueError):
        estimate_constants(quadratic, Region.ball([0, 0], 1.0), n_samples=1)
    with pytest.raises(ValueError):
        estimate_constants(quadratic, Region.ball([0, 0, 0], 1.0))
    with pytest.raises(ValueError):
        Region.ball([0, 0], 0.0)
