"""Desingularizing functions, KL-inequality checks and trajectory length certificates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import CertificateReport, ObjectiveProblem, Region, eval_objective
from .descent import DiscreteTrajectory, run_gd_batch
from .flow import FlowTrajectory
from .rng import INITS, substream

KL_TOL = 1e-9
GRAD_FLOOR = 1e-12
RESOLUTION = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class Desingularizer:
    """``psi(t) = c t**theta`` on ``[0, t_break]``, affine with matching slope beyond.

    Concave and strictly increasing for ``c > 0`` and ``0 < theta <= 1``.
    """

    c: float
    theta: float
    t_break: float = np.inf

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.t_break > 0:
            raise ValueError("t_break must be > 0")

    @property
    def _psi_break(self) -> float:
        return self.c * self.t_break**self.theta

    @property
    def _slope(self) -> float:
        return self.c * self.theta * self.t_break ** (self.theta - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("psi is defined on [0, inf)")
        if not np.isfinite(self.t_break):
            return self.c * t**self.theta
        tb = self.t_break
        return np.where(t <= tb, self.c * np.minimum(t, tb) ** self.theta,
                        self._psi_break + self._slope * (t - tb))

    def derivative(self, t):
        """``psi'(t)`` for ``t > 0`` (infinite at 0 when ``theta < 1``)."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            inner = self.c * self.theta * t ** (self.theta - 1)
        if not np.isfinite(self.t_break):
            return inner
        return np.where(t <= self.t_break, inner, self._slope)

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("psi^-1 is defined on [0, inf)")
        inner = (s / self.c) ** (1 / self.theta)
        if not np.isfinite(self.t_break):
            return inner
        pb = self._psi_break
        return np.where(s <= pb, (np.minimum(s, pb) / self.c) ** (1 / self.theta),
                        self.t_break + (s - pb) / self._slope)


def f_tilde(problem: ObjectiveProblem, V: Sequence[float], x) -> float:
    """Distance from ``f(x)`` to the finite set ``V``."""
    V = np.asarray(V, dtype=float)
    if V.size == 0:
        raise ValueError("V must be non-empty (use [0.0] when f has no critical values)")
    return float(np.min(np.abs(eval_objective(problem, x)[0] - V)))


def _tilde(fvals, V):
    V = np.asarray(V, dtype=float)
    return np.min(np.abs(np.asarray(fvals, dtype=float)[..., None] - V), axis=-1)


def kl_check(problem: ObjectiveProblem, psi: Desingularizer, V: Sequence[float], samples,
             tolerance: float = KL_TOL) -> CertificateReport:
    """Check ``psi'(f~(x)) ||grad f(x)|| >= 1`` at smooth non-critical samples.

    Samples with ``||grad f(x)|| < 1e-12``, or with ``f~(x)`` at rounding level
    (``<= 64 eps (1 + |f(x)|)``, which includes ``f~ = 0``), are skipped and
    counted in ``details["excluded"]``; the latter also in ``details["unresolved"]``.
    """
    V = np.asarray(V, dtype=float)
    if V.size == 0:
        raise ValueError("V must be non-empty")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if problem.batch_gradient is not None:
        fv = problem.batch_value(samples)
        gn = np.linalg.norm(problem.batch_gradient(samples), axis=1)
    else:
        ev = [eval_objective(problem, x) for x in samples]
        fv = np.array([e[0] for e in ev])
        gn = np.array([np.linalg.norm(e[1]) for e in ev])
    ft = _tilde(fv, V)
    resolved = ft > RESOLUTION * (1 + np.abs(fv))
    keep = resolved & (gn >= GRAD_FLOOR)
    margins = psi.derivative(ft[keep]) * gn[keep] - 1.0
    return CertificateReport.from_margins(
        "kl_inequality", margins, tolerance, instances=samples[keep],
        excluded=int((~keep).sum()), unresolved=int((~resolved).sum()), c=psi.c, theta=psi.theta,
    )


def calibrate_power(problem: ObjectiveProblem, V: Sequence[float], samples, theta: float = 0.5,
                    inflation: float = 2.0) -> Desingularizer:
    """Smallest ``c`` making ``c t**theta`` desingularize ``f`` on ``samples``, times ``inflation``.

    This only fits the constant; whether the result is a certificate is for
    :func:`kl_check` to decide on the points that matter.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    ev = [eval_objective(problem, x) for x in samples]
    fv = np.array([e[0] for e in ev])
    gn = np.array([np.linalg.norm(e[1]) for e in ev])
    ft = _tilde(fv, V)
    keep = (ft > RESOLUTION * (1 + np.abs(fv))) & (gn >= GRAD_FLOOR)
    need = ft[keep] ** (1 - theta) / (theta * gn[keep])
    c = inflation * float(need.max()) if need.size else 1.0
    return Desingularizer(c=max(c, 1e-12), theta=theta)


def _count_values_in_range(V, lo, hi) -> int:
    # a trajectory converging to a critical level only reaches it up to rounding
    V = np.asarray(V, dtype=float)
    slack = RESOLUTION * (1 + np.abs(V))
    return int(np.sum((V >= lo - slack) & (V <= hi + slack)))


def continuous_length_certificate(flow: FlowTrajectory, problem: ObjectiveProblem, psi: Desingularizer,
                                  m: int, V: Optional[Sequence[float]] = None,
                                  region: Optional[Region] = None,
                                  tolerance: Optional[float] = None) -> CertificateReport:
    """Check ``(1/2m) int ||x'|| dt <= psi((f(x(0)) - f(x(T))) / 2m)``.

    The default tolerance budget is ``100 * flow.rel_tol``.
    """
    name = "length_continuous"
    if m < 1:
        raise ValueError("m must be >= 1")
    tol = 100 * flow.rel_tol if tolerance is None else tolerance
    drop = float(flow.f_values[0] - flow.f_values[-1])
    if drop < -tol:
        return CertificateReport.invalid(name, f"f increased along the flow by {-drop:.3e}", tol)
    if region is not None and not np.all(region.contains(flow.states)):
        return CertificateReport.invalid(name, "flow left the certified region", tol)
    details = {"arc_length": flow.arc_length, "f_drop": drop, "m": m, "termination": flow.termination}
    if V is not None:
        seen = _count_values_in_range(V, flow.f_values.min(), flow.f_values.max())
        details["critical_values_in_range"] = seen
        if m < seen:
            return CertificateReport.invalid(name, f"m={m} below {seen} critical values in the f-range", tol)
    margin = float(psi(max(drop, 0.0) / (2 * m)) - flow.arc_length / (2 * m))
    return CertificateReport.from_margins(name, [margin], tol, **details)


def discrete_alpha_bar(L: float, M: float, eps: float = 1.0) -> float:
    """Step bound ``min(1/L, 2 eps / ((6 + eps) M))`` for the discrete length bound."""
    return min(1.0 / L, 2 * eps / ((6 + eps) * M))


def discrete_length_certificate(traj: DiscreteTrajectory, problem: ObjectiveProblem, psi: Desingularizer,
                                m: int, eps: float = 1.0, L: float = 1.0, M: Optional[float] = None,
                                V: Optional[Sequence[float]] = None, region: Optional[Region] = None,
                                tolerance: float = 1e-9) -> CertificateReport:
    """Check the discrete length bound over iterates ``x_0..x_K`` (``x_{K+1}`` is the last one stored).

    ``(1/((2+eps) m)) sum_{k<=K} ||x_{k+1}-x_k||
    <= psi((f(x_0) - f(x_K)) / 2m) + 2L/(2+eps) max alpha_k``,
    together with ``f(x_0) >= ... >= f(x_{K+1})``.
    """
    name = "length_discrete"
    if m < 1 or not eps > 0 or not L > 0:
        raise ValueError("need m >= 1, eps > 0, L > 0")
    steps = traj.steps
    amax = float(steps.max()) if steps.size else 0.0
    details = {"eps": eps, "L": L, "M": M, "m": m, "max_alpha": amax, "n_steps": int(steps.size)}
    if steps.size:
        bound = 1.0 / L if M is None else discrete_alpha_bar(L, M, eps)
        details["alpha_bar"] = bound
        if amax > bound * (1 + 1e-12):
            return CertificateReport.invalid(name, f"max step {amax:.3e} exceeds alpha_bar {bound:.3e}",
                                             tolerance, **details)
    head = traj.iterates[:-1] if steps.size else traj.iterates
    if region is not None and not np.all(region.contains(head)):
        return CertificateReport.invalid(name, "iterates left the certified region", tolerance, **details)
    f = traj.f_values
    fK = f[-2] if steps.size else f[-1]
    if V is not None:
        seen = _count_values_in_range(V, f.min(), f.max())
        details["critical_values_in_range"] = seen
        if m < seen:
            return CertificateReport.invalid(name, f"m={m} below {seen} critical values in the f-range",
                                             tolerance, **details)
    lhs = traj.length / ((2 + eps) * m)
    rhs = float(psi(max(f[0] - fK, 0.0) / (2 * m))) + 2 * L / (2 + eps) * amax
    rise = float(np.max(np.diff(f))) if f.size > 1 else 0.0
    monotone = rise <= tolerance * (1 + float(np.max(np.abs(f))))
    details.update(lhs=lhs, rhs=rhs, max_f_increase=rise, monotone=bool(monotone))
    rep = CertificateReport.from_margins(name, [rhs - lhs], tolerance, **details)
    if not monotone:
        rep.passed = False
        rep.reason = "function values not monotone"
    return rep


# Example: cubic x1^3 - x1^2 x2 with psi(t) = 3 t^(1/3)
CUBIC_PSI = Desingularizer(3.0, 1.0 / 3.0)
CUBIC_DECREASE_THRESHOLD = 2 * float(CUBIC_PSI.inverse(1.0 / 9.0))


def cubic_gradient_inequality_check(samples, tolerance: float = 1e-12) -> CertificateReport:
    """Check ``((3x1^2 - 2x1x2)^2 + x1^4)^(1/2) >= |x1^3 - x1^2 x2|^(2/3)``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    x1, x2 = X[:, 0], X[:, 1]
    lhs = np.sqrt((3 * x1**2 - 2 * x1 * x2) ** 2 + x1**4)
    rhs = np.abs(x1**3 - x1**2 * x2) ** (2.0 / 3.0)
    return CertificateReport.from_margins("cubic_gradient_inequality", lhs - rhs, tolerance, instances=X)


def sample_negative_inits(problem: ObjectiveProblem, n: int, seed: int, radius: float = 0.3) -> np.ndarray:
    """``n`` points of ``B(0, radius)`` with ``f < 0``, by keyed rejection sampling."""
    region = Region.ball(np.zeros(problem.dimension), radius)
    out = []
    j = 0
    while len(out) < n:
        pts = region.sample(substream(seed, INITS, j), 256)
        fv = problem.batch_value(pts) if problem.batch_value is not None else [problem.value(p) for p in pts]
        out.extend(pts[np.asarray(fv) < 0])
        j += 1
    return np.array(out[:n])


@dataclass
class DecreaseResult:
    report: CertificateReport
    decreases: np.ndarray
    n_exited: int
    n_inside: int
    iterations: np.ndarray
    inits: np.ndarray = None
    f0: np.ndarray = None
    exit_f: np.ndarray = None
    exited: np.ndarray = None


def uniform_decrease_experiment(problem: ObjectiveProblem, alpha: float = 5e-5, n_inits: int = 500,
                                seed: int = 0, init_radius: float = 0.3, exit_radius: float = 0.8,
                                max_iter: int = 1_000_000,
                                psi: Desingularizer = CUBIC_PSI) -> DecreaseResult:
    """Decrease of ``f`` at the exit from ``B(0, exit_radius)`` for runs started below the critical value 0.

    Each exiting run must lose at least ``2 psi^-1(1/9)``; runs still inside
    after ``max_iter`` steps (or converged) are counted in ``n_inside``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    threshold = 2 * float(psi.inverse(1.0 / 9.0))
    X0 = sample_negative_inits(problem, n_inits, seed, init_radius)
    res = run_gd_batch(problem, X0, alpha, max_iter, grad_tol=0.0,
                       exit_region=Region.ball(np.zeros(problem.dimension), exit_radius))
    exited = res.termination == "exited"
    dec = res.f0[exited] - res.exit_f[exited]
    rep = CertificateReport.from_margins(
        "uniform_decrease", dec - threshold, 0.0, instances=X0[exited],
        threshold=threshold, min_decrease=float(dec.min()) if dec.size else float("nan"),
        n_exited=int(exited.sum()), n_inside=int((~exited).sum()), alpha=alpha,
    )
    return DecreaseResult(rep, dec, int(exited.sum()), int((~exited).sum()), res.n_iter,
                          X0, res.f0, res.exit_f, exited)
