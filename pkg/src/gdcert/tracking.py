"""Discrete iterates versus the continuous gradient trajectory over a finite horizon."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CertificateReport, ObjectiveProblem, Region, as_vector
from .descent import StepSchedule, run_gd
from .flow import FlowTrajectory, integrate_flow
from .rng import PAIRS, substream


def alpha_bar(epsilon: float, T: float, L: float, M: float) -> float:
    """Step threshold ``2 eps exp(-M T) / (L M T)`` below which iterates stay eps-close to the flow."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not (T > 0 and L > 0 and M > 0):
        raise ValueError("T, L and M must be > 0")
    return 2 * epsilon * np.exp(-M * T) / (L * M * T)


@dataclass
class TrackingReport:
    epsilon: float
    T: float
    alpha_bar: float
    times: np.ndarray
    deviations: np.ndarray
    max_deviation: float
    passed: bool
    tolerance: float
    variant: str = "lower_bounded"
    invalidated: bool = False
    reason: str = ""
    flow: Optional[FlowTrajectory] = field(default=None, repr=False)

    def to_certificate(self) -> CertificateReport:
        if self.invalidated:
            return CertificateReport.invalid("tracking", self.reason, self.tolerance, variant=self.variant)
        rep = CertificateReport.from_margins(
            "tracking", [self.epsilon - self.max_deviation], self.tolerance,
            epsilon=self.epsilon, T=self.T, alpha_bar=self.alpha_bar,
            max_deviation=self.max_deviation, variant=self.variant, n_iterates=int(self.times.size),
        )
        rep.worst = int(np.argmax(self.deviations)) if self.deviations.size else None
        return rep


def _steps_within(schedule: StepSchedule, T: float, cap: int = 50_000_000) -> int:
    """Number of steps ``K`` with ``alpha_0 + ... + alpha_{K-1} <= T``."""
    if schedule.kind == "constant":
        return int(np.floor(T / schedule.values * (1 + 1e-15)))
    t, k = 0.0, 0
    while k < cap:
        a = schedule(k)
        if t + a > T * (1 + 1e-15):
            break
        t += a
        k += 1
    return k


def tracking_deviation(problem: ObjectiveProblem, x0, schedule: StepSchedule, T: float,
                       flow_rel_tol: float = 1e-9, epsilon: Optional[float] = None,
                       L: Optional[float] = None, M: Optional[float] = None,
                       region: Optional[Region] = None) -> TrackingReport:
    """Measure ``max_k ||x_k - x(t_k)||`` over discrete times ``t_k <= T``.

    With ``epsilon``, ``L`` and ``M`` given, the schedule must satisfy
    ``alpha_upper <= alpha_bar(epsilon, T, L, M)``; the report passes when the
    maximum deviation is at most ``epsilon + 10 * flow_rel_tol``. For
    objectives not bounded below the single-initial-point variant applies and
    the flow must exist on all of ``[0, T]``. Leaving ``region`` invalidates
    the report.
    """
    x0 = as_vector(x0, problem.dimension)
    tol = 10 * flow_rel_tol
    variant = "lower_bounded" if problem.lower_bounded else "single_point"
    abar = alpha_bar(epsilon, T, L, M) if None not in (epsilon, L, M) else float("nan")
    eps = float("inf") if epsilon is None else float(epsilon)

    def bad(reason, **kw):
        return TrackingReport(eps, T, abar, np.array([]), np.array([]), float("nan"), False, tol,
                              variant, True, reason, **kw)

    if np.isfinite(abar) and schedule.alpha_upper > abar * (1 + 1e-12):
        return bad(f"step bound {schedule.alpha_upper:.3e} exceeds alpha_bar {abar:.3e}")

    K = _steps_within(schedule, T)
    traj = run_gd(problem, x0, schedule, max_iter=max(K, 1), grad_tol=0.0)
    flow = integrate_flow(problem, x0, horizon=T, rel_tol=flow_rel_tol,
                          escape_radius=max(1e3, 10 * (1 + np.linalg.norm(x0))))
    if flow.termination not in ("horizon", "converged"):
        return bad(f"flow terminated by {flow.termination} at t={flow.t_end:.6g} < T", flow=flow)

    tk = traj.times[: K + 1]
    xk = traj.iterates[: K + 1]
    if tk.size < K + 1 and traj.termination == "grad_tol":
        # exact critical point: every later iterate equals the last one
        pad = K + 1 - tk.size
        tk = np.concatenate([tk, tk[-1] + np.cumsum([schedule(k) for k in range(tk.size - 1, K)])])
        xk = np.vstack([xk, np.repeat(xk[-1:], pad, axis=0)])
    if tk.size < K + 1:
        return bad(f"discrete run terminated by {traj.termination} before t=T", flow=flow)
    xt = flow(np.minimum(tk, flow.t_end))
    if region is not None and not (np.all(region.contains(xk)) and np.all(region.contains(flow.states))):
        return bad("trajectories left the Lipschitz region", flow=flow)
    dev = np.linalg.norm(xk - xt, axis=1)
    mx = float(dev.max())
    return TrackingReport(eps, T, abar, tk, dev, mx, bool(mx <= eps + tol), tol, variant, flow=flow)


def taylor_residual_check(flow: FlowTrajectory, L: float, M: float, n_pairs: int = 200, seed: int = 0,
                          max_gap: float = 0.1, pairs=None) -> CertificateReport:
    """Check ``||x(t) - x(s) - x'(s)(t - s)|| <= (M L / 2)(t - s)^2`` on sampled pairs ``s <= t``.

    ``pairs`` (an ``(N, 2)`` array of ``(s, t)``) overrides the sampling.
    """
    tol = 10 * flow.rel_tol
    T = flow.t_end
    if pairs is None:
        rng = substream(seed, PAIRS)
        s = rng.uniform(0.0, T, n_pairs)
        gap = rng.uniform(0.0, 1.0, n_pairs) * np.minimum(max_gap, T - s)
        pairs = np.column_stack([s, s + gap])
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    s, t = pairs[:, 0], np.minimum(pairs[:, 1], T)
    if np.any(t < s):
        raise ValueError("pairs must satisfy s <= t")
    resid = np.linalg.norm(flow(t) - flow(s) - flow.derivative(s) * (t - s)[:, None], axis=1)
    bound = 0.5 * M * L * (t - s) ** 2
    return CertificateReport.from_margins("taylor_local_error", bound - resid, tol, instances=pairs,
                                          L=L, M=M, max_residual=float(resid.max()))
