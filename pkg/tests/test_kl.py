import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdcert.core import Region
from gdcert.descent import StepSchedule, run_gd
from gdcert.flow import integrate_flow
from gdcert.kl import (CUBIC_DECREASE_THRESHOLD, CUBIC_PSI, Desingularizer, calibrate_power,
                       continuous_length_certificate, cubic_gradient_inequality_check, discrete_alpha_bar,
                       discrete_length_certificate, f_tilde, kl_check, sample_negative_inits,
                       uniform_decrease_experiment)
from gdcert.rng import substream


def test_f_tilde(cubic, quadratic):
    assert f_tilde(cubic, [0.0], [0.5, 0.25]) == pytest.approx(0.0625)
    assert f_tilde(cubic, [0.0], [0.0, 1.0]) == 0.0
    x = np.array([np.sqrt(1.5), 0.0])
    assert f_tilde(quadratic, [0.0, 1.0], x) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        f_tilde(quadratic, [], x)


def test_desingularizer_validation():
    with pytest.raises(ValueError):
        Desingularizer(0.0, 0.5)
    with pytest.raises(ValueError):
        Desingularizer(1.0, 1.5)
    with pytest.raises(ValueError):
        Desingularizer(1.0, 0.5, t_break=0.0)


psis = st.builds(Desingularizer, st.floats(0.1, 10), st.floats(0.05, 1.0),
                 st.one_of(st.just(np.inf), st.floats(0.01, 10)))


@given(psis)
def test_round_trip(psi):
    t = np.logspace(-8, 4, 200)
    np.testing.assert_allclose(psi.inverse(psi(t)), t, rtol=1e-12)
    assert psi(0.0) == 0.0
    assert np.all(np.diff(psi(t)) > 0)


@given(psis, st.integers(0, 2**32))
def test_concave(psi, seed):
    rng = np.random.default_rng(seed)
    abc = np.sort(rng.uniform(0, 20, (1000, 3)), axis=1)
    a, b, c = abc.T
    ok = c > a
    a, b, c = a[ok], b[ok], c[ok]
    chord = ((c - b) * psi(a) + (b - a) * psi(c)) / (c - a)
    assert np.all(psi(b) >= chord - 1e-12 * (1 + np.abs(chord)))


def test_affine_extension_slope():
    psi = Desingularizer(2.0, 0.5, t_break=4.0)
    assert psi(4.0) == pytest.approx(4.0)
    assert psi.derivative(10.0) == pytest.approx(0.5)
    assert psi(6.0) == pytest.approx(5.0)


def test_kl_examples(quadratic, cubic):
    pts = Region.ball([0, 0], 0.8).grid(200)
    keep = (np.abs(pts[:, 0]) > 1e-6) & (np.abs(pts[:, 0] - pts[:, 1]) > 1e-6)
    assert kl_check(cubic, CUBIC_PSI, [0.0], pts[keep]).passed
    samples = Region.ball([0, 0], 3.0).sample(substream(0, 1), 500)
    rep = kl_check(quadratic, Desingularizer(2.0, 0.5), [0.0], samples)
    assert rep.margin == pytest.approx(np.sqrt(2) - 1, abs=1e-12)
    rep = kl_check(quadratic, Desingularizer(1.0, 0.5), [0.0], samples)
    assert not rep.passed and rep.margin == pytest.approx(1 / np.sqrt(2) - 1, abs=1e-12)
    rep = kl_check(quadratic, Desingularizer(2.0, 0.5), [0.0], [[0.0, 0.0]])
    assert rep.details["excluded"] == 1 and rep.passed


@given(st.integers(0, 2**32), st.floats(1e-6, 1e-3))
def test_kl_cubic_any_grid(seed, width):
    rng = np.random.default_rng(seed)
    pts = Region.ball([0, 0], 0.8).sample(rng, 400)
    keep = (np.abs(pts[:, 0]) > width) & (np.abs(pts[:, 0] - pts[:, 1]) > width)
    from gdcert.problems import make_problem
    assert kl_check(make_problem("cubic_saddle"), CUBIC_PSI, [0.0], pts[keep]).passed


def test_calibrate_power(scalar_fact):
    pts = Region.ball([0, 0], 2.0).sample(substream(0, 2), 5000)
    psi = calibrate_power(scalar_fact, [0.0, 1.0], pts, theta=0.5, inflation=1.0)
    assert psi.c <= 1 / np.sqrt(2 - np.sqrt(2)) + 1e-9
    assert kl_check(scalar_fact, psi, [0.0, 1.0], pts, tolerance=1e-9).passed


def test_continuous_certificate_examples(quadratic, cubic):
    fl = integrate_flow(quadratic, [1.0, 0.0])
    rep = continuous_length_certificate(fl, quadratic, Desingularizer(2.0, 0.5), 1, V=[0.0])
    # arc length 1, f drop 0.5: 2 sqrt(0.5 / 2) - 1/2
    assert rep.passed and rep.margin == pytest.approx(0.5, abs=1e-8)
    const = integrate_flow(cubic, [0.0, 0.0], horizon=1.0)
    assert continuous_length_certificate(const, cubic, CUBIC_PSI, 1).margin == 0.0
    with pytest.raises(ValueError):
        continuous_length_certificate(fl, quadratic, Desingularizer(2.0, 0.5), 0)
    reg = Region.ball([0, 0], 1.0)
    for j in range(50):
        x0 = Region.ball([0, 0], 0.3).sample(substream(3, 1, j), 1)[0]
        fl = integrate_flow(cubic, x0, horizon=20.0, escape_radius=0.8)
        assert continuous_length_certificate(fl, cubic, CUBIC_PSI, 1, V=[0.0], region=reg).passed


def test_continuous_certificate_guards(scalar_fact, quadratic):
    fl = integrate_flow(scalar_fact, [0.3, 1.2], horizon=20.0)
    rep = continuous_length_certificate(fl, scalar_fact, Desingularizer(1.5, 0.5), 1, V=[0.0, 1.0])
    assert rep.passed and rep.details["critical_values_in_range"] == 1
    assert continuous_length_certificate(fl, scalar_fact, Desingularizer(1.5, 0.5), 2, V=[0.0, 1.0]).passed
    fl = integrate_flow(scalar_fact, [1.5, -0.2], horizon=30.0)
    rep = continuous_length_certificate(fl, scalar_fact, Desingularizer(1.5, 0.5), 1, V=[0.0, 1.0])
    assert rep.invalidated and "m=1" in rep.reason
    rep = continuous_length_certificate(fl, scalar_fact, Desingularizer(1.5, 0.5), 2, V=[0.0, 1.0])
    assert rep.passed and rep.details["critical_values_in_range"] == 2
    fl = integrate_flow(quadratic, [1.0, 0.0], horizon=2.0)
    assert continuous_length_certificate(fl, quadratic, Desingularizer(2.0, 0.5), 1,
                                         region=Region.ball([0, 0], 0.5)).invalidated


def test_discrete_certificate_examples(quadratic, cubic):
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.1))
    rep = discrete_length_certificate(tr, quadratic, Desingularizer(2.0, 0.5), 1, eps=1.0, L=1.2)
    assert rep.passed
    assert rep.details["lhs"] == pytest.approx(1 / 3, abs=1e-9)
    assert rep.details["rhs"] == pytest.approx(1.0 + 2 * 1.2 / 3 * 0.1, abs=1e-9)
    crit = run_gd(cubic, [0.0, 0.0], StepSchedule.constant(0.1))
    assert discrete_length_certificate(crit, cubic, CUBIC_PSI, 1).passed
    assert not discrete_length_certificate(tr, quadratic, Desingularizer(2.0, 0.5), 1, L=1.2, M=1.2).invalidated
    big = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(0.3))
    assert discrete_length_certificate(big, quadratic, Desingularizer(2.0, 0.5), 1, L=1.2, M=1.2).invalidated
    assert discrete_alpha_bar(1.2, 1.2, 1.0) == pytest.approx(2 / (7 * 1.2))
    for j in range(50):
        x0 = Region.ball([0, 0], 0.3).sample(substream(4, 1, j), 1)[0]
        tr = run_gd(cubic, x0, StepSchedule.constant(1e-4), max_iter=20_000, escape_radius=0.8)
        assert discrete_length_certificate(tr, cubic, CUBIC_PSI, 1, L=5.0, V=[0.0],
                                           region=Region.ball([0, 0], 0.8)).passed


def test_nonmonotone_fails(quadratic):
    tr = run_gd(quadratic, [1.0, 0.0], StepSchedule.constant(2.5), max_iter=5, grad_tol=0.0)
    rep = discrete_length_certificate(tr, quadratic, Desingularizer(2.0, 0.5), 1, L=0.3)
    assert not rep.passed and not rep.details["monotone"]


def test_cubic_threshold_and_inits(cubic):
    assert CUBIC_DECREASE_THRESHOLD == pytest.approx(2 / 19683, rel=1e-14)
    assert CUBIC_DECREASE_THRESHOLD >= 1e-4
    assert cubic.value(np.array([0.25, 0.3])) < 0
    X0 = sample_negative_inits(cubic, 50, seed=1)
    assert X0.shape == (50, 2) and np.all(cubic.batch_value(X0) < 0) and np.all(np.linalg.norm(X0, axis=1) <= 0.3)


def test_cubic_gradient_inequality():
    rep = cubic_gradient_inequality_check([[0.5, 0.25]])
    assert rep.margin == pytest.approx(np.sqrt(0.3125) - 0.0625 ** (2 / 3), abs=1e-12)
    assert cubic_gradient_inequality_check([[0.0, 3.0]]).margin == 0.0
    pts = Region.ball([0, 0], 10.0).sample(substream(0, 9), 100_000)
    assert cubic_gradient_inequality_check(pts).passed


def test_uniform_decrease_small(cubic):
    res = uniform_decrease_experiment(cubic, alpha=1e-4, n_inits=20, seed=3, max_iter=200_000)
    assert res.n_exited + res.n_inside == 20
    assert res.report.passed and np.all(res.decreases >= CUBIC_DECREASE_THRESHOLD)
    with pytest.raises(ValueError):
        uniform_decrease_experiment(cubic, alpha=0.0)
