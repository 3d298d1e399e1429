"""Critical-point classification, strict-saddle escape Monte Carlo and length suprema."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CertificateReport, ObjectiveProblem, Region, as_vector, eval_objective, finite_diff_hessian
from .descent import StepSchedule, run_gd, run_gd_batch
from .flow import integrate_flow
from .rng import INITS, substream

CLASSES = ("local_min_candidate", "strict_saddle", "strict_max_candidate", "degenerate", "not_critical")


@dataclass
class SaddleReport:
    point: np.ndarray
    grad_norm: float
    eigenvalues: np.ndarray
    classification: str
    tol_grad: float
    tol_eig: float


def classify_critical_point(problem: ObjectiveProblem, x, tol_grad: float = 1e-6,
                            tol_eig: Optional[float] = None) -> SaddleReport:
    """Classify ``x`` by the sign pattern of the Hessian spectrum.

    Any eigenvalue below ``-tol_eig`` next to one that is not makes a strict
    saddle; the default ``tol_eig`` is ``1e-6 (1 + max |eigenvalue|)``.
    """
    x = as_vector(x, problem.dimension)
    if not tol_grad > 0 or (tol_eig is not None and not tol_eig > 0):
        raise ValueError("tolerances must be > 0")
    g = eval_objective(problem, x)[1]
    gn = float(np.linalg.norm(g))
    H = problem.hessian(x) if problem.hessian is not None else finite_diff_hessian(problem, x)
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    te = 1e-6 * (1 + float(np.max(np.abs(lam)))) if tol_eig is None else tol_eig
    if gn > tol_grad:
        cls = "not_critical"
    elif lam[0] > te:
        cls = "local_min_candidate"
    elif lam[-1] < -te:
        cls = "strict_max_candidate"
    elif lam[0] < -te:
        cls = "strict_saddle"
    else:
        cls = "degenerate"
    return SaddleReport(x, gn, lam, cls, tol_grad, te)


@dataclass
class EscapeResult:
    saddle_fraction: float
    counts: dict
    n_trials: int
    n_nonconvergent: int
    initial_points: np.ndarray
    reports: list = field(repr=False)
    terminations: list = field(default_factory=list, repr=False)

    def to_certificate(self, max_fraction: float) -> CertificateReport:
        rep = CertificateReport.from_margins(
            "saddle_escape", [max_fraction - self.saddle_fraction], 0.0,
            saddle_fraction=self.saddle_fraction, counts=self.counts, n_trials=self.n_trials,
            n_nonconvergent=self.n_nonconvergent,
        )
        if self.n_nonconvergent:
            rep.reason = f"{self.n_nonconvergent} trials did not converge"
        return rep


def escape_monte_carlo(problem: ObjectiveProblem, region: Region, alpha: float, n_trials: int,
                       seed: int = 0, grad_tol: float = 1e-10, max_iter: int = 200_000,
                       initial_points=None, tol_grad: float = 1e-8) -> EscapeResult:
    """Constant-step runs from random points of ``region``; fraction of limits that are strict saddles.

    Runs that do not reach ``grad_tol`` (step too large, unbounded, or too
    slow) are counted in ``n_nonconvergent`` and classified as found.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if initial_points is None:
        X0 = np.array([region.sample(substream(seed, INITS, i), 1)[0] for i in range(n_trials)])
    else:
        X0 = np.atleast_2d(np.asarray(initial_points, dtype=float))
    n = X0.shape[0]
    if problem.batch_gradient is not None:
        res = run_gd_batch(problem, X0, alpha, max_iter, grad_tol=grad_tol)
        finals, terms = res.x_final, list(res.termination)
    else:
        runs = [run_gd(problem, x0, StepSchedule.constant(alpha), max_iter=max_iter, grad_tol=grad_tol)
                for x0 in X0]
        finals = np.array([r.iterates[-1] for r in runs])
        terms = [r.termination for r in runs]
    reports = []
    counts = {c: 0 for c in CLASSES}
    nonconv = 0
    for x, term in zip(finals, terms):
        if term != "grad_tol":
            nonconv += 1
        if not np.all(np.isfinite(x)):
            counts["not_critical"] += 1
            reports.append(None)
            continue
        rep = classify_critical_point(problem, x, tol_grad=max(tol_grad, grad_tol))
        counts[rep.classification] += 1
        reports.append(rep)
    return EscapeResult(counts["strict_saddle"] / n, counts, n, nonconv, X0, reports, list(terms))


@dataclass
class SigmaEstimate:
    """Monte-Carlo lower estimate of a supremum of trajectory lengths."""

    mode: str
    region: Region
    alpha_bar: float
    n_samples: int
    max_length: float
    running_max: np.ndarray
    lengths: np.ndarray
    bound: Optional[float] = None
    blowup: bool = False
    note: str = "lower bound of a supremum"
    report: Optional[CertificateReport] = None


def estimate_sigma(problem: ObjectiveProblem, region: Region, mode: str = "continuous",
                   alpha_bar: float = 0.0, horizon: float = np.inf, n_samples: int = 100, seed: int = 0,
                   min_critical_value: Optional[float] = None, sup_f: Optional[float] = None,
                   rel_tol: float = 1e-9, max_iter: int = 200_000, grad_tol: float = 1e-10,
                   tolerance: Optional[float] = None) -> SigmaEstimate:
    """Largest trajectory length seen from ``n_samples`` random initial points.

    Modes: ``continuous`` (flow to convergence), ``continuous_T`` (flow on
    ``[0, horizon]``; with ``min_critical_value`` it also checks every length
    against ``sqrt(T (sup_f - m(f)))``, where ``sup_f`` defaults to the largest
    sampled initial value), ``discrete`` (random steps in ``(0, alpha_bar]``).
    A trajectory that blows up stops the estimate (``blowup=True``).
    """
    if mode not in ("continuous", "continuous_T", "discrete"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "discrete" and not alpha_bar > 0:
        raise ValueError("discrete mode needs alpha_bar > 0")
    if mode == "continuous_T" and not np.isfinite(horizon):
        raise ValueError("continuous_T mode needs a finite horizon")
    tol = 100 * rel_tol if tolerance is None else tolerance
    lengths, f0s = [], []
    blowup = False
    for i in range(n_samples):
        x0 = region.sample(substream(seed, INITS, i), 1)[0]
        f0s.append(eval_objective(problem, x0)[0])
        if mode == "discrete":
            sched = StepSchedule.random(alpha_bar, seed, i)
            tr = run_gd(problem, x0, sched, max_iter=max_iter, grad_tol=grad_tol)
            if tr.termination in ("escaped", "nonfinite"):
                blowup = True
            lengths.append(tr.length)
        else:
            fl = integrate_flow(problem, x0, horizon=horizon if mode == "continuous_T" else np.inf,
                                rel_tol=rel_tol)
            if fl.termination in ("blowup", "nonfinite"):
                blowup = True
            lengths.append(fl.arc_length)
        if blowup:
            break
    lengths = np.array(lengths)
    run = np.maximum.accumulate(lengths) if lengths.size else lengths
    est = SigmaEstimate(mode, region, float(alpha_bar), len(lengths), float(run[-1]), run, lengths,
                        blowup=blowup)
    if blowup:
        est.max_length = float("inf")
        est.note = "trajectory blew up: supremum is infinite"
        est.report = CertificateReport.invalid("sigma", f"unbounded trajectory from sample {len(lengths) - 1}")
        return est
    if mode == "continuous_T" and min_critical_value is not None:
        top = max(f0s) if sup_f is None else sup_f
        est.bound = float(np.sqrt(horizon * max(top - min_critical_value, 0.0)))
        est.report = CertificateReport.from_margins("sigma_T_bound", [est.bound - est.max_length], tol,
                                                    bound=est.bound, max_length=est.max_length)
    return est
