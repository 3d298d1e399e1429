"""The gradient method with variable step sizes, and its rate certificate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import CertificateReport, NonFiniteError, ObjectiveProblem, Region, as_vector, eval_objective
from .rng import STEPS, substream

DEFAULT_GRAD_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
DEFAULT_ESCAPE_RADIUS = 1e6


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_k`` with declared bounds ``alpha_lower <= alpha_k <= alpha_upper``.

    ``kind`` is one of ``constant`` (``values`` is a float), ``sequence``
    (``values`` an array; the last entry repeats) or ``generator``
    (``values`` a deterministic callable ``k -> alpha_k``).
    """

    kind: str
    values: object
    alpha_upper: float
    alpha_lower: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "sequence", "generator"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.alpha_upper > 0:
            raise ValueError("alpha_upper must be > 0")
        if self.alpha_lower < 0 or self.alpha_lower > self.alpha_upper:
            raise ValueError("need 0 <= alpha_lower <= alpha_upper")
        if self.kind == "sequence":
            v = np.asarray(self.values, dtype=float)
            if v.ndim != 1 or v.size == 0:
                raise ValueError("sequence schedule needs a non-empty 1-D array")
            object.__setattr__(self, "values", v)
            self._check(v)

    def _check(self, a):
        a = np.asarray(a)
        if np.any(a <= 0) or np.any(a > self.alpha_upper):
            raise ValueError(f"step sizes must lie in (0, {self.alpha_upper}]")
        if self.alpha_lower > 0 and np.any(a < self.alpha_lower):
            raise ValueError(f"step sizes must be >= alpha_lower={self.alpha_lower}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        if not alpha > 0:
            raise ValueError("alpha must be > 0")
        return cls("constant", float(alpha), float(alpha), float(alpha))

    @classmethod
    def sequence(cls, values: Sequence[float], alpha_lower: float = 0.0) -> "StepSchedule":
        v = np.asarray(values, dtype=float)
        return cls("sequence", v, float(v.max()), alpha_lower)

    @classmethod
    def random(cls, alpha_upper: float, seed: int, *keys: int, alpha_lower: float = 0.0,
               chunk: int = 4096) -> "StepSchedule":
        """Uniform steps in ``(alpha_lower, alpha_upper]``, reproducible per ``(seed, keys)``."""
        lo = float(alpha_lower)
        cache: dict[int, np.ndarray] = {}

        def gen(k: int) -> float:
            j, i = divmod(k, chunk)
            if j not in cache:
                u = substream(seed, STEPS, *keys, j).random(chunk)
                cache[j] = alpha_upper - (alpha_upper - lo) * u
            return float(cache[j][i])

        return cls("generator", gen, float(alpha_upper), lo)

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.values
        if self.kind == "sequence":
            return float(self.values[min(k, self.values.size - 1)])
        a = float(self.values(k))
        self._check(a)
        return a


@dataclass
class DiscreteTrajectory:
    iterates: np.ndarray
    steps: np.ndarray
    f_values: np.ndarray
    grad_norms: np.ndarray
    termination: str
    next_step: float = float("nan")
    problem_name: str = ""
    schedule: Optional[StepSchedule] = field(default=None, repr=False)

    @property
    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.iterates, axis=0), axis=1)

    @property
    def cumulative_length(self) -> np.ndarray:
        """``cumulative_length[k] = sum_{i<k} ||x_{i+1} - x_i||``."""
        return np.concatenate([[0.0], np.cumsum(self.step_lengths)])

    @property
    def length(self) -> float:
        return float(self.step_lengths.sum())

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        """Discrete times ``t_k = alpha_0 + ... + alpha_{k-1}``."""
        return np.concatenate([[0.0], np.cumsum(self.steps)])


def run_gd(problem: ObjectiveProblem, x0, schedule: StepSchedule,
           max_iter: int = DEFAULT_MAX_ITER, grad_tol: float = DEFAULT_GRAD_TOL,
           escape_radius: float = DEFAULT_ESCAPE_RADIUS,
           stop: Optional[Callable[[np.ndarray], bool]] = None) -> DiscreteTrajectory:
    """Iterate ``x_{k+1} = x_k - alpha_k grad f(x_k)``.

    Stops at the first iterate with ``||grad f|| <= grad_tol`` ("grad_tol"),
    outside ``escape_radius`` ("escaped"), with a non-finite value
    ("nonfinite"), after ``max_iter`` steps ("max_iter"), or for which the
    optional predicate ``stop`` holds ("stopped").
    """
    x = as_vector(x0, problem.dimension)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if grad_tol < 0:
        raise ValueError("grad_tol must be >= 0")
    if not escape_radius > np.linalg.norm(x):
        raise ValueError("escape_radius must exceed ||x0||")

    xs, alphas, fs, gs = [], [], [], []
    termination = "max_iter"
    next_step = float("nan")
    k = 0
    while True:
        try:
            f, g = eval_objective(problem, x)
        except NonFiniteError:
            termination = "nonfinite"
            if alphas:
                next_step = alphas.pop()
            break
        gn = float(np.linalg.norm(g))
        xs.append(x)
        fs.append(f)
        gs.append(gn)
        if gn <= grad_tol:
            termination = "grad_tol"
        elif k >= max_iter:
            termination = "max_iter"
        elif np.linalg.norm(x) > escape_radius:
            termination = "escaped"
        elif stop is not None and stop(x):
            termination = "stopped"
        else:
            a = schedule(k)
            alphas.append(a)
            x = x - a * g
            k += 1
            continue
        next_step = schedule(k)
        break

    if not xs:
        raise NonFiniteError(f"{problem.name}: objective not finite at x0", x)
    return DiscreteTrajectory(
        iterates=np.array(xs), steps=np.array(alphas, dtype=float), f_values=np.array(fs),
        grad_norms=np.array(gs), termination=termination, next_step=next_step,
        problem_name=problem.name, schedule=schedule,
    )


def rate_certificate(traj: DiscreteTrajectory, alpha_lower: float,
                     tolerance: float = 1e-12) -> CertificateReport:
    """Check ``min_{i<=k} ||grad f(x_i)|| <= 2/(alpha_lower (k+2)) sum_{i=floor(k/2)}^{k} ||x_{i+1}-x_i||``.

    The step out of the last stored iterate is ``next_step * ||grad f(x_K)||``
    exactly, so every index ``k <= K`` is checked without truncation error.
    Margins are relative: ``(rhs - lhs) / max(lhs, rhs)``.
    """
    name = "rate"
    if not alpha_lower > 0:
        raise ValueError("alpha_lower must be > 0")
    if traj.termination != "grad_tol":
        return CertificateReport.invalid(name, f"run terminated by {traj.termination}, not grad_tol", tolerance)
    if traj.n_steps and traj.steps.min() < alpha_lower * (1 - 1e-15):
        return CertificateReport.invalid(name, "a step size is below alpha_lower", tolerance)

    last = traj.next_step * traj.grad_norms[-1] if np.isfinite(traj.next_step) else 0.0
    lengths = np.concatenate([traj.step_lengths, [last]])
    csum = np.concatenate([[0.0], np.cumsum(lengths)])
    k = np.arange(len(traj.grad_norms))
    tail = csum[k + 1] - csum[k // 2]
    rhs = 2.0 / (alpha_lower * (k + 2)) * tail
    lhs = np.minimum.accumulate(traj.grad_norms)
    scale = np.maximum(np.maximum(lhs, rhs), np.finfo(float).tiny)
    margins = (rhs - lhs) / scale
    return CertificateReport.from_margins(name, margins, tolerance, alpha_lower=alpha_lower,
                                          n_iterates=int(k.size),
                                          tail="truncated at i=k; the infinite tail only enlarges the bound")


@dataclass
class BatchResult:
    """Outcome of :func:`run_gd_batch`; arrays are indexed by run."""

    x0: np.ndarray
    f0: np.ndarray
    x_final: np.ndarray
    f_final: np.ndarray
    n_iter: np.ndarray
    termination: np.ndarray
    exit_f: np.ndarray


def run_gd_batch(problem: ObjectiveProblem, X0, alpha: float, max_iter: int,
                 grad_tol: float = DEFAULT_GRAD_TOL, exit_region: Optional[Region] = None,
                 escape_radius: float = DEFAULT_ESCAPE_RADIUS, block: int = 256) -> BatchResult:
    """Constant-step gradient method on many initial points at once.

    Runs stop individually when they leave ``exit_region`` ("exited", the
    first iterate outside is kept), reach ``grad_tol``, escape, or hit
    ``max_iter``. Needs ``problem.batch_gradient``; the update is the same
    floating-point expression as :func:`run_gd`, so each row reproduces the
    corresponding sequential run.

    Iterates advance ``block`` steps at a time; stopping conditions are then
    located in the block history and later steps of stopped runs discarded.
    """
    if problem.batch_gradient is None or problem.batch_value is None:
        raise ValueError(f"{problem.name} has no vectorised gradient")
    X = np.array(X0, dtype=float)
    N, n = X.shape
    f0 = problem.batch_value(X)
    term = np.full(N, "max_iter", dtype=object)
    n_iter = np.zeros(N, dtype=int)
    exit_f = np.full(N, np.nan)
    active = np.arange(N)
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while active.size and k <= max_iter:
            B = min(block, max_iter - k)
            hist = np.empty((B + 1, active.size, n))
            G = np.empty_like(hist)
            hist[0] = X[active]
            for s in range(B):
                G[s] = problem.batch_gradient(hist[s])
                hist[s + 1] = hist[s] - alpha * G[s]
            G[B] = problem.batch_gradient(hist[B])
            gn = np.linalg.norm(G, axis=2)
            bad = ~(np.all(np.isfinite(hist), axis=2) & np.all(np.isfinite(G), axis=2))
            out = ~exit_region.contains(hist) if exit_region is not None else np.zeros_like(bad)
            conv = gn <= grad_tol
            esc = np.linalg.norm(hist, axis=2) > escape_radius
            stop = bad | out | conv | esc
            any_stop = stop.any(axis=0)
            first = np.where(any_stop, np.argmax(stop, axis=0), B)
            cols = np.arange(active.size)
            X[active] = hist[first, cols]
            n_iter[active] = k + first
            for mask, label in ((esc, "escaped"), (conv, "grad_tol"), (out, "exited"), (bad, "nonfinite")):
                hit = any_stop & mask[first, cols]
                term[active[hit]] = label
            ex = any_stop & out[first, cols] & ~bad[first, cols]
            if ex.any():
                exit_f[active[ex]] = problem.batch_value(X[active[ex]])
            active = active[~any_stop]
            k += B
            if B == 0:
                break
    return BatchResult(np.array(X0, dtype=float), f0, X, problem.batch_value(X), n_iter, term, exit_f)
