"""Numerical gradient flow ``x' = -grad f(x)`` with arc length and blow-up detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NonFiniteError, ObjectiveProblem, as_vector, eval_objective

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

CONVERGED_GRAD = 1e-12
SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 5.0
STABILITY = 2.5  # DOPRI5 stability boundary on the negative real axis is about 3.3


@dataclass
class FlowTrajectory:
    """Accepted steps of an adaptive integration of the gradient flow.

    ``derivs[i] = -grad f(states[i])``; together with ``states`` these give a
    C^1 cubic Hermite interpolant, evaluated by calling the trajectory.
    ``arc_cumulative[i]`` and ``energy_cumulative[i]`` are the integrals of
    ``||x'||`` and ``||x'||^2`` from 0 to ``times[i]``, integrated as extra
    error-controlled components of the Runge-Kutta step.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    f_values: np.ndarray
    arc_cumulative: np.ndarray
    energy_cumulative: np.ndarray
    horizon: float
    termination: str
    rel_tol: float
    problem_name: str = ""
    n_rejected: int = 0
    escape_radius: float = field(default=1e3, repr=False)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def arc_length(self) -> float:
        return float(self.arc_cumulative[-1])

    @property
    def energy(self) -> float:
        return float(self.energy_cumulative[-1])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.linalg.norm(self.derivs, axis=1)

    def polyline_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.states, axis=0), axis=1).sum())

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError(f"t outside integrated interval [0, {self.t_end}]")
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, max(len(self.times) - 2, 0))
        return t, i

    def __call__(self, t) -> np.ndarray:
        """Dense output ``x(t)``; ``t`` scalar or 1-D array."""
        t, i = self._locate(t)
        if len(self.times) == 1:
            return np.broadcast_to(self.states[0], t.shape + self.states.shape[1:]).copy()
        t0, t1 = self.times[i], self.times[i + 1]
        h = (t1 - t0)[..., None]
        s = ((t - t0) / (t1 - t0))[..., None]
        y0, y1, d0, d1 = self.states[i], self.states[i + 1], self.derivs[i], self.derivs[i + 1]
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
                + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)

    def derivative(self, t) -> np.ndarray:
        """Derivative of the Hermite interpolant."""
        t, i = self._locate(t)
        if len(self.times) == 1:
            return np.broadcast_to(self.derivs[0], t.shape + self.derivs.shape[1:]).copy()
        t0, t1 = self.times[i], self.times[i + 1]
        h = (t1 - t0)[..., None]
        s = ((t - t0) / (t1 - t0))[..., None]
        y0, y1, d0, d1 = self.states[i], self.states[i + 1], self.derivs[i], self.derivs[i + 1]
        s2 = s * s
        return ((6 * s2 - 6 * s) / h * (y0 - y1) + (3 * s2 - 4 * s + 1) * d0 + (3 * s2 - 2 * s) * d1)


def _rhs(problem, x):
    f, g = eval_objective(problem, x)
    return f, -g


def integrate_flow(problem: ObjectiveProblem, x0, horizon: float = np.inf, rel_tol: float = 1e-9,
                   escape_radius: float = 1e3, max_steps: int = 1_000_000) -> FlowTrajectory:
    """Integrate the gradient flow from ``x0`` up to ``horizon`` (may be ``inf``).

    Termination causes: ``horizon``, ``converged`` (``||grad f|| <= 1e-12``),
    ``blowup`` (``||x|| > escape_radius`` or step size below
    ``1e-14 * horizon``), ``nonfinite``, ``max_steps``.
    """
    x = as_vector(x0, problem.dimension)
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    if not 1e-13 < rel_tol < 1e-2:
        raise ValueError("rel_tol must lie in (1e-13, 1e-2)")
    f, d = _rhs(problem, x)

    times, states, derivs, fvals = [0.0], [x], [d], [f]
    arc, energy = [0.0], [0.0]
    t = 0.0
    n_rej = 0
    termination = "max_steps"
    gn = np.linalg.norm(d)
    h = min(horizon, max(rel_tol ** 0.2 * (1 + np.linalg.norm(x)) / max(gn, 1e-300), 1e-8), 1.0)

    if gn <= CONVERGED_GRAD:
        termination = "converged"
    else:
        for _ in range(max_steps):
            h_floor = 1e-14 * (horizon if np.isfinite(horizon) else max(1.0, t))
            if h < h_floor:
                termination = "blowup"
                break
            last = False
            if t + h >= horizon:
                h = horizon - t
                last = True
            try:
                k = [d]
                for s in range(1, 6):
                    y = x + h * sum(a * kk for a, kk in zip(_A[s], k))
                    k.append(_rhs(problem, y)[1])
                y6 = y
                x_new = x + h * sum(b * kk for b, kk in zip(_B5[:6], k))
                f_new, d_new = _rhs(problem, x_new)
            except NonFiniteError:
                n_rej += 1
                h *= MIN_FACTOR
                continue
            k.append(d_new)
            # arc length and energy ride along as extra components of the same RK step
            nk = np.array([np.linalg.norm(kk) for kk in k])
            d_arc = h * float(_B5 @ nk)
            d_en = h * float(_B5 @ (nk * nk))
            err_vec = h * sum(e * kk for e, kk in zip(_E, k))
            scale = rel_tol * (1 + max(np.linalg.norm(x), np.linalg.norm(x_new)))
            err = max(np.linalg.norm(err_vec) / scale,
                      abs(h * float(_E @ nk)) / (rel_tol * (1 + arc[-1] + d_arc)),
                      abs(h * float(_E @ (nk * nk))) / (rel_tol * (1 + energy[-1] + d_en)))
            if not np.isfinite(err):
                n_rej += 1
                h *= MIN_FACTOR
                continue
            if err > 1.0:
                n_rej += 1
                h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
                continue
            arc.append(arc[-1] + d_arc)
            energy.append(energy[-1] + d_en)

            t = horizon if last else t + h
            x, d, f = x_new, d_new, f_new
            times.append(t)
            states.append(x)
            derivs.append(d)
            fvals.append(f)

            if last:
                termination = "horizon"
                break
            if np.linalg.norm(d) <= CONVERGED_GRAD:
                termination = "converged"
                break
            if np.linalg.norm(x) > escape_radius:
                termination = "blowup"
                break
            fac = MAX_FACTOR if err == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))
            h *= fac
            # keep h inside the real stability interval; otherwise iterates
            # near a minimum oscillate at the rel_tol level and never converge
            dy = np.linalg.norm(x_new - y6)
            if dy > 0:
                rho = np.linalg.norm(d_new - k[5]) / dy
                if rho > 0:
                    h = min(h, STABILITY / rho)

    return FlowTrajectory(
        times=np.array(times), states=np.array(states), derivs=np.array(derivs),
        f_values=np.array(fvals), arc_cumulative=np.array(arc), energy_cumulative=np.array(energy),
        horizon=float(horizon), termination=termination, rel_tol=float(rel_tol),
        problem_name=problem.name, n_rejected=n_rej, escape_radius=float(escape_radius),
    )


def arc_length(flow: FlowTrajectory) -> float:
    """Quadrature value of ``int ||x'(t)|| dt`` over the integrated interval."""
    if len(flow.times) == 0:
        raise ValueError("empty trajectory")
    return flow.arc_length


def energy_identity_residual(flow: FlowTrajectory, problem: ObjectiveProblem | None = None) -> float:
    """Relative mismatch between ``f(x(0)) - f(x(T))`` and ``int ||x'||^2 dt``.

    ``problem`` is only used to re-evaluate the endpoint values when given.
    """
    if problem is not None:
        f0 = eval_objective(problem, flow.states[0])[0]
        fT = eval_objective(problem, flow.states[-1])[0]
    else:
        f0, fT = flow.f_values[0], flow.f_values[-1]
    drop = f0 - fT
    return float(abs(drop - flow.energy) / (1 + abs(drop)))
