"""Built-in acceptance suite: twelve numbered checks, each with a runtime budget.

Every check returns a :class:`CriterionResult`; ``run_all`` runs them in order.
Both ``gdcert verify`` and the test suite go through this module.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CertificateReport, ObjectiveProblem, Region, eval_objective, finite_diff_gradient
from .descent import StepSchedule, rate_certificate, run_gd
from .flow import energy_identity_residual, integrate_flow
from .kl import (CUBIC_PSI, CUBIC_DECREASE_THRESHOLD, Desingularizer, calibrate_power,
                 continuous_length_certificate, discrete_alpha_bar, discrete_length_certificate, kl_check,
                 uniform_decrease_experiment)
from .lipschitz import estimate_constants
from .problems import CATALOG, balance_residual, factorization_bound_check, instance_of, make_problem
from .rng import CONFIGS, INITS, substream
from .saddle import escape_monte_carlo, estimate_sigma
from .tracking import alpha_bar, tracking_deviation


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    summary: str
    details: dict = field(default_factory=dict)

    @property
    def check_passed(self) -> bool:
        return bool(self.details.get("check_passed", self.passed))

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name}: {self.summary} ({self.runtime:.2f} s, budget {self.budget:g} s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "runtime": self.runtime,
                "budget": self.budget, "summary": self.summary,
                "details": CertificateReport("", 0.0, True, 0.0, details=self.details).to_dict()["details"]}


def _pmap(fn: Callable, items, threads: int = 1) -> list:
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ----------------------------------------------------------------------------
# length-certificate setups shared with the command-line runner


@dataclass(frozen=True)
class LengthCase:
    """Desingularizer, certified region and initial set for the length certificates on one problem.

    Flows and discrete runs stop once ``||x - center|| > stop_radius``; the
    certified region is slightly larger so the stopping node is still inside.
    """

    problem: ObjectiveProblem
    psi: Desingularizer
    V: tuple
    m: int
    inits: Region
    region: Region
    stop_radius: float
    horizon: float = 50.0
    max_iter: int = 20_000

    def constants(self, seed: int = 0, n_samples: int = 10_000):
        return estimate_constants(self.problem, self.region, n_samples=n_samples, seed=seed)


def length_case(problem_id: str, seed: int = 0) -> LengthCase:
    """Reference setup for ``problem_id``.

    The matrix-factorization desingularizer is fitted (``c t^(1/2)``, factor
    2 above the largest required constant) on region samples and then checked
    separately by :func:`kl_check` on fresh samples and on the trajectories.
    """
    if problem_id == "quadratic":
        p = make_problem("quadratic")
        return LengthCase(p, Desingularizer(2.0, 0.5), (0.0,), 1, Region.ball([0, 0], 1.0),
                          Region.ball([0, 0], 1.0), 1.0)
    if problem_id == "cubic_saddle":
        p = make_problem("cubic_saddle")
        return LengthCase(p, CUBIC_PSI, (0.0,), 1, Region.ball([0, 0], 0.3), Region.ball([0, 0], 1.0), 0.8)
    if problem_id == "negative_quartic":
        p = make_problem("negative_quartic")
        return LengthCase(p, Desingularizer(2.0, 0.25), (0.0,), 1, Region.ball([0.0], 1.0),
                          Region.ball([0.0], 2.5), 2.0)
    if problem_id == "scalar_factorization":
        p = make_problem("scalar_factorization")
        return LengthCase(p, Desingularizer(1.5, 0.5), (0.0, 1.0), 2, Region.ball([0, 0], 1.5),
                          Region.ball([0, 0], 3.0), 3.0)
    if problem_id == "matrix_factorization":
        rng = substream(seed, CONFIGS, 99)
        p = make_problem("matrix_factorization", M=rng.standard_normal((2, 2)), r=1)
        region = Region.ball(np.zeros(4), 3.0)
        fit = region.sample(substream(seed, CONFIGS, 100), 20_000)
        psi = calibrate_power(p, p.known_critical_values, fit, theta=0.5, inflation=2.0)
        return LengthCase(p, psi, tuple(p.known_critical_values), len(p.known_critical_values),
                          Region.ball(np.zeros(4), 1.5), region, 3.0)
    raise ValueError(f"unknown problem id {problem_id!r}")


def length_trial(case: LengthCase, x0, mode: str, L: float, M: float, seed: int, index: int,
                 rel_tol: float = 1e-9, eps: float = 1.0):
    """One trajectory and its length certificate; returns ``(report, trajectory)``."""
    if mode == "continuous":
        fl = integrate_flow(case.problem, x0, horizon=case.horizon, rel_tol=rel_tol,
                            escape_radius=case.stop_radius)
        rep = continuous_length_certificate(fl, case.problem, case.psi, case.m, V=case.V, region=case.region)
        return rep, fl
    abar = discrete_alpha_bar(L, M, eps)
    sched = StepSchedule.random(abar, seed, INITS, index, alpha_lower=0.5 * abar)
    tr = run_gd(case.problem, x0, sched, max_iter=case.max_iter, escape_radius=case.stop_radius)
    rep = discrete_length_certificate(tr, case.problem, case.psi, case.m, eps=eps, L=L, M=M, V=case.V,
                                      region=case.region)
    return rep, tr


# ----------------------------------------------------------------------------
# the criteria


def _result(number, name, ok, t0, budget, summary, **details) -> CriterionResult:
    rt = time.perf_counter() - t0
    details["check_passed"] = bool(ok)
    return CriterionResult(number, name, bool(ok) and rt < budget, rt, budget, summary, details)


def criterion_kl_cubic(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    p = make_problem("cubic_saddle")
    pts = Region.ball([0, 0], 0.8).grid(200)
    keep = (np.abs(pts[:, 0]) > 1e-6) & (np.abs(pts[:, 0] - pts[:, 1]) > 1e-6)
    rep = kl_check(p, CUBIC_PSI, [0.0], pts[keep], tolerance=1e-9 * scale)
    return _result(1, "kl_certificate_cubic", rep.passed, t0, 5.0,
                   f"margin {rep.margin:.3e} >= -1e-9 on {rep.n_checked} grid points", report=rep.to_dict())


def criterion_uniform_decrease(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    res = uniform_decrease_experiment(make_problem("cubic_saddle"), alpha=5e-5, n_inits=500, seed=seed)
    rep = res.report
    ok = rep.passed and res.n_exited > 0
    return _result(2, "uniform_decrease_cubic", ok, t0, 60.0,
                   f"min decrease {rep.details['min_decrease']:.4g} >= {CUBIC_DECREASE_THRESHOLD:.6g} "
                   f"over {res.n_exited} exiting runs ({res.n_inside} still inside)", report=rep.to_dict())


def criterion_blowup(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    fl = integrate_flow(make_problem("negative_quartic"), [1.0], rel_tol=1e-9)
    t = np.linspace(0.0, 0.45, 451)
    exact = (1 - 2 * t) ** -0.5
    err = float(np.max(np.abs(fl(t)[:, 0] - exact) / exact))
    ok = err <= 1e-4 * scale and fl.termination == "blowup" and fl.t_end < 0.5
    return _result(3, "blowup_negative_quartic", ok, t0, 1.0,
                   f"rel err {err:.2e} on t<=0.45, {fl.termination} at t={fl.t_end:.7f}",
                   rel_error=err, t_blowup=fl.t_end, termination=fl.termination)


def _tracking_configs(problem_id: str, seed: int, n: int):
    if problem_id == "quadratic":
        inits, region, T_rng = Region.ball([0, 0], 1.0), Region.ball([0, 0], 1.0), (0.5, 2.0)
    else:
        inits, region, T_rng = Region.ball([0, 0], 0.3), Region.ball([0, 0], 0.8), (0.1, 0.6)
    out = []
    for j in range(n):
        rng = substream(seed, CONFIGS, 1 if problem_id == "quadratic" else 2, j)
        x0 = inits.sample(rng, 1)[0]
        out.append((x0, float(rng.uniform(0.05, 0.5)), float(rng.uniform(*T_rng))))
    return region, out


def criterion_tracking(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    rel_tol = 1e-9
    rows, ok = [], True
    for pid in ("quadratic", "cubic_saddle"):
        p = make_problem(pid)
        region, cfgs = _tracking_configs(pid, seed, 20)
        est = estimate_constants(p, region, seed=seed)

        def one(cfg):
            x0, eps, T = cfg
            ab = alpha_bar(eps, T, est.L, est.M)
            return tracking_deviation(p, x0, StepSchedule.constant(ab), T, rel_tol, eps, est.L, est.M, region)

        for (x0, eps, T), r in zip(cfgs, _pmap(one, cfgs, threads)):
            good = (not r.invalidated) and r.max_deviation <= eps + 10 * rel_tol * scale
            ok &= good
            rows.append({"problem": pid, "epsilon": eps, "T": T, "max_deviation": r.max_deviation,
                         "variant": r.variant, "passed": good, "reason": r.reason})
    worst = max(rows, key=lambda r: r["max_deviation"] / r["epsilon"] if np.isfinite(r["max_deviation"]) else np.inf)
    return _result(4, "tracking", ok, t0, 30.0,
                   f"{sum(r['passed'] for r in rows)}/{len(rows)} configs within eps; "
                   f"worst deviation/eps {worst['max_deviation'] / worst['epsilon']:.3f}", configs=rows)


def criterion_length(seed=0, scale=1.0, threads=1, n_traj=50) -> CriterionResult:
    t0 = time.perf_counter()
    per, ok = {}, True
    for pid in CATALOG:
        case = length_case(pid, seed)
        est = case.constants(seed)
        X0 = [case.inits.sample(substream(seed, INITS, 7, j), 1)[0] for j in range(n_traj)]
        entry = {"L": est.L, "M": est.M, "psi_c": case.psi.c, "psi_theta": case.psi.theta, "m": case.m}
        states = []
        for mode in ("continuous", "discrete"):
            out = _pmap(lambda j: length_trial(case, X0[j], mode, est.L, est.M, seed, j), range(n_traj), threads)
            reps = [o[0].rescaled(scale) for o in out]
            good = sum(r.passed for r in reps)
            ok &= good == n_traj
            entry[mode] = {"passed": good, "min_margin": float(min(r.margin for r in reps)),
                           "reasons": sorted({r.reason for r in reps if r.reason})}
            states.extend(o[1].states if mode == "continuous" else o[1].iterates for o in out)
        # the desingularizer itself must hold where the trajectories went and on fresh samples
        fresh = case.region.sample(substream(seed, CONFIGS, 101), 5_000)
        klr = kl_check(case.problem, case.psi, case.V, np.vstack([fresh] + states), tolerance=1e-9 * scale)
        entry["kl_margin"] = klr.margin
        ok &= klr.passed
        per[pid] = entry
    return _result(5, "length_certificates", ok, t0, 120.0,
                   "; ".join(f"{k}: {v['continuous']['passed']}+{v['discrete']['passed']}/{2 * n_traj}"
                             for k, v in per.items()), problems=per)


def criterion_balance(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    rel_tol, horizon = 1e-8, 20.0
    limit = 100 * rel_tol * (1 + horizon) * scale
    worst, ok, n = 0.0, True, 0
    probs = [make_problem("scalar_factorization")] * 5 + [make_problem("matrix_factorization")] * 5
    for j, p in enumerate(probs):
        rng = substream(seed, CONFIGS, 6, j)
        if p.name == "matrix_factorization":
            p = make_problem("matrix_factorization", M=rng.standard_normal((2, 2)), r=1)
        inst = instance_of(p)
        fl = integrate_flow(p, rng.standard_normal(p.dimension), horizon=horizon, rel_tol=rel_tol)
        X0, Y0 = inst.unpack(fl.states[0])
        res = max(balance_residual(*inst.unpack(z), X0, Y0) for z in fl.states)
        worst = max(worst, res)
        ok &= res <= limit and fl.termination in ("horizon", "converged")
        n += 1
    return _result(6, "balance_invariant", ok, t0, 10.0, f"max residual {worst:.2e} <= {limit:.2e} over {n} flows",
                   max_residual=worst, limit=limit)


def criterion_factorization_bound(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    ok, worst = True, np.inf
    for j in range(20):
        rng = substream(seed, CONFIGS, 7, j)
        p = make_problem("matrix_factorization", M=rng.standard_normal((2, 2)), r=1)
        fl = integrate_flow(p, rng.standard_normal(4), horizon=20.0, rel_tol=1e-9)
        rep = factorization_bound_check(fl, p, tolerance=1e-6 * scale)
        ok &= rep.passed
        worst = min(worst, rep.margin)
    s = make_problem("scalar_factorization", M=1.0)
    fl = integrate_flow(s, [2.0, 1.0], horizon=20.0, rel_tol=1e-9)
    rep = factorization_bound_check(fl, s, tolerance=1e-6 * scale)
    m0 = rep.details["margin_at_start"]
    ok &= rep.passed and abs(m0) <= 1e-9 and abs(rep.details["bound"] - 17.0) <= 1e-9
    return _result(7, "factorization_bound", ok, t0, 30.0,
                   f"min margin {worst:.3e} over 20 instances; scalar (2,1) bound {rep.details['bound']:g}, "
                   f"margin at t=0 {m0:.1e}", min_margin=worst, scalar_margin_at_start=m0)


def criterion_rate(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    counts, ok, worst = {}, True, np.inf
    for pid in CATALOG:
        case = length_case(pid, seed)
        est = case.constants(seed)
        ab = 1.0 / est.M
        n_used = 0
        for j in range(20):
            x0 = case.inits.sample(substream(seed, INITS, 8, j), 1)[0]
            sched = StepSchedule.random(ab, seed, 8, j, alpha_lower=0.5 * ab)
            tr = run_gd(case.problem, x0, sched, max_iter=50_000, escape_radius=10 * case.stop_radius)
            if tr.termination != "grad_tol":
                continue
            rep = rate_certificate(tr, 0.5 * ab, tolerance=1e-12 * scale)
            ok &= rep.passed
            worst = min(worst, rep.margin)
            n_used += 1
        counts[pid] = n_used
    ok &= sum(counts.values()) > 0
    return _result(8, "rate_inequality", ok, t0, 30.0,
                   f"min relative margin {worst:.3e} over {sum(counts.values())} converged runs {counts}",
                   runs=counts, min_margin=worst)


def criterion_saddle(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    p = make_problem("scalar_factorization")
    res = escape_monte_carlo(p, Region.ball([0, 0], 2.0), 0.01, 1000, seed=seed)
    on_manifold = sum(1 for r in res.reports
                      if r is not None and abs(r.point[0] * r.point[1] - 1) <= 1e-4)
    ok = res.saddle_fraction <= 0.01
    return _result(9, "saddle_escape", ok, t0, 60.0,
                   f"strict-saddle fraction {res.saddle_fraction:.3f} <= 0.01; {on_manifold} limits on xy=1; "
                   f"{res.n_nonconvergent} non-convergent", counts=res.counts, n_nonconvergent=res.n_nonconvergent)


def criterion_energy(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    worst, n, ok = 0.0, 0, True
    for pid in CATALOG:
        case = length_case(pid, seed)
        for j in range(5):
            x0 = case.inits.sample(substream(seed, INITS, 10, j), 1)[0]
            fl = integrate_flow(case.problem, x0, horizon=20.0, rel_tol=1e-9)
            r = energy_identity_residual(fl, case.problem)
            worst = max(worst, r)
            n += 1
    ok = worst <= 1e-5 * scale
    return _result(10, "energy_identity", ok, t0, 10.0, f"max residual {worst:.2e} <= 1e-5 over {n} flows",
                   max_residual=worst, n_flows=n)


def criterion_sigma(seed=0, scale=1.0, threads=1) -> CriterionResult:
    t0 = time.perf_counter()
    est = estimate_sigma(make_problem("quadratic"), Region.ball([0, 0], 1.0), "continuous_T", horizon=1.0,
                         n_samples=200, seed=seed, min_critical_value=0.0, sup_f=0.5, tolerance=1e-6 * scale)
    ok = est.report is not None and est.report.passed and abs(est.bound - np.sqrt(0.5)) < 1e-15
    return _result(11, "sigma_T_bound", ok, t0, 10.0,
                   f"max length {est.max_length:.6f} <= {est.bound:.6f} from {est.n_samples} samples",
                   max_length=est.max_length, bound=est.bound)


def gradient_oracle(seed=0, n_points=50) -> CertificateReport:
    """Relative agreement of analytic and central-difference gradients on every catalog problem."""
    margins = []
    for pid in CATALOG:
        case = length_case(pid, seed)
        for j in range(n_points):
            x = case.region.sample(substream(seed, CONFIGS, 12, j), 1)[0]
            g = eval_objective(case.problem, x)[1]
            fd = finite_diff_gradient(case.problem, x)
            margins.append(1e-6 - np.linalg.norm(g - fd) / (1 + np.linalg.norm(g)))
    return CertificateReport.from_margins("gradient_oracle", margins, 0.0)


def criterion_oracle(seed=0, scale=1.0, threads=1, suite_runtime: Optional[float] = None) -> CriterionResult:
    t0 = time.perf_counter()
    rep = gradient_oracle(seed)
    total = (suite_runtime or 0.0) + (time.perf_counter() - t0)
    ok = rep.passed and total < 300.0
    res = _result(12, "oracle_and_suite_runtime", ok, t0, 300.0,
                  f"gradient oracle margin {rep.margin:.3e} on {rep.n_checked} points; suite {total:.1f} s < 300 s",
                  suite_runtime=total, report=rep.to_dict())
    res.runtime = total
    return res


CRITERIA = (criterion_kl_cubic, criterion_uniform_decrease, criterion_blowup, criterion_tracking,
            criterion_length, criterion_balance, criterion_factorization_bound, criterion_rate,
            criterion_saddle, criterion_energy, criterion_sigma)


def run_all(seed: int = 0, scale: float = 1.0, threads: int = 1, echo: Optional[Callable] = None,
            only: Optional[set] = None) -> list[CriterionResult]:
    """Run all twelve criteria in order; ``echo`` receives each result line as it is produced."""
    out, total = [], 0.0
    for fn in CRITERIA:
        n = len(out) + 1
        if only is None or n in only:
            r = fn(seed=seed, scale=scale, threads=threads)
            total += r.runtime
            out.append(r)
            if echo:
                echo(r.line())
        else:
            out.append(None)
    r = criterion_oracle(seed=seed, scale=scale, threads=threads, suite_runtime=total)
    out.append(r)
    if echo:
        echo(r.line())
    return [r for r in out if r is not None]
