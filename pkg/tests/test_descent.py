import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdcert.core import Region
from gdcert.descent import StepSchedule, rate_certificate, run_gd, run_gd_batch


def test_quadratic_half_step(quadratic):
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5), max_iter=60, grad_tol=0.0)
    k = np.arange(len(tr.iterates))
    np.testing.assert_array_equal(tr.iterates[:, 0], 0.5 ** k)
    assert tr.length == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(tr.cumulative_length) >= 0)
    assert tr.termination == "max_iter"


def test_critical_start(cubic):
    tr = run_gd(cubic, [0.0, 0.0], StepSchedule.constant(0.1))
    assert tr.termination == "grad_tol" and tr.length == 0.0 and len(tr.iterates) == 1


def test_quartic_escapes(quartic):
    tr = run_gd(quartic, [1.0], StepSchedule.constant(0.1), escape_radius=10.0)
    assert tr.termination == "escaped"
    assert np.all(np.diff(tr.iterates[:, 0]) > 0)
    assert tr.iterates[-1, 0] > 10.0


def test_nonfinite_reported(quartic):
    tr = run_gd(quartic, [1.0], StepSchedule.constant(0.1), escape_radius=np.inf)
    assert tr.termination == "nonfinite"
    assert np.all(np.isfinite(tr.iterates)) and len(tr.steps) == len(tr.iterates) - 1


def test_run_gd_errors(quadratic):
    with pytest.raises(ValueError):
        run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5), escape_radius=0.5)
    with pytest.raises(ValueError):
        StepSchedule.constant(-0.1)
    with pytest.raises(ValueError):
        run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5), max_iter=0)


def test_exact_update(cubic):
    sched = StepSchedule.random(0.01, 3, alpha_lower=0.001)
    tr = run_gd(cubic, [0.3, -0.2], sched, max_iter=500)
    for k in range(len(tr.steps)):
        assert np.array_equal(tr.iterates[k + 1], tr.iterates[k] - tr.steps[k] * cubic.gradient(tr.iterates[k]))


@given(st.floats(0.01, 0.99), st.floats(-2, 2), st.floats(-2, 2))
def test_quadratic_length_is_norm(alpha, a, b):
    x0 = np.array([a, b])
    tr = run_gd(__import__("gdcert").make_problem("quadratic"), x0, StepSchedule.constant(alpha),
                max_iter=200 if alpha > 0.2 else 5000, grad_tol=0.0)
    assert tr.length == pytest.approx(np.linalg.norm(x0), abs=1e-9)


@given(st.floats(1e-3, 1.0), st.integers(0, 2**40), st.floats(0.0, 1.0))
def test_schedule_bounds(upper, seed, frac):
    s = StepSchedule.random(upper, seed, alpha_lower=frac * upper)
    a = np.array([s(k) for k in range(50)])
    assert np.all(a > 0) and np.all(a <= upper) and np.all(a >= frac * upper)
    assert np.array_equal(a, [StepSchedule.random(upper, seed, alpha_lower=frac * upper)(k) for k in range(50)])


def test_sequence_schedule():
    s = StepSchedule.sequence([0.1, 0.2, 0.3])
    assert [s(k) for k in range(5)] == [0.1, 0.2, 0.3, 0.3, 0.3]
    assert s.alpha_upper == 0.3
    with pytest.raises(ValueError):
        StepSchedule.sequence([0.1, -0.2])


def test_rate_examples(quadratic, cubic):
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5))
    rep = rate_certificate(tr, 0.5)
    assert rep.passed and tr.termination == "grad_tol"
    # k = 4: min gradient 0.5^4 against (2/0.5)/6 * sum_{i=2}^{4} 0.5^(i+1)
    g, steps = tr.grad_norms, tr.step_lengths
    assert g[:5].min() == 0.0625
    assert 4 / 6 * steps[2:5].sum() == pytest.approx(4 * 0.21875 / 6, abs=1e-15)
    assert 4 / 6 * steps[2:].sum() == pytest.approx(4 * 0.25 / 6, abs=1e-9)
    tr = run_gd(cubic, [0.5, -0.5], StepSchedule.constant(0.01), grad_tol=1e-8)
    assert tr.termination == "grad_tol" and rate_certificate(tr, 0.01).passed
    crit = run_gd(cubic, [0.0, 0.0], StepSchedule.constant(0.01))
    assert rate_certificate(crit, 0.01).passed


def test_rate_preconditions(quadratic):
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5), max_iter=3, grad_tol=0.0)
    assert rate_certificate(tr, 0.5).invalidated
    with pytest.raises(ValueError):
        rate_certificate(tr, 0.0)
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.5))
    assert rate_certificate(tr, 0.6).invalidated


def test_min_gradient_monotone(scalar_fact):
    tr = run_gd(scalar_fact, [0.3, 1.2], StepSchedule.constant(0.05))
    m = np.minimum.accumulate(tr.grad_norms)
    assert np.all(np.diff(m) <= 0)


def test_batch_matches_sequential(cubic):
    X0 = np.array([[0.2, 0.25], [0.1, 0.15], [-0.2, 0.1]])
    res = run_gd_batch(cubic, X0, 1e-3, 3000, grad_tol=0.0, exit_region=Region.ball([0, 0], 0.8))
    for i, x0 in enumerate(X0):
        tr = run_gd(cubic, x0, StepSchedule.constant(1e-3), max_iter=int(res.n_iter[i]), grad_tol=0.0)
        assert np.array_equal(tr.iterates[-1], res.x_final[i])
    assert set(res.termination) <= {"exited", "max_iter"}
