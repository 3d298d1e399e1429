"""Config-driven experiment runner.

Usage::

    gdcert run CONFIG.toml [--seed N] [--out-dir DIR] [--threads K] [--tolerance-scale S]
    gdcert list-problems
    gdcert verify [--seed N] [--out-dir DIR] [--threads K] [--tolerance-scale S]

A config is one TOML document describing one experiment::

    kind = "gd"
    seed = 0                       # optional, --seed wins

    [problem]
    id = "quadratic"
    params = { n = 2 }

    [schedule]                     # constant | sequence | random
    kind = "constant"
    alpha = 0.5

    [region]                       # ball | box
    kind = "ball"
    center = [0.0, 0.0]
    radius = 1.0

    [options]                      # kind-specific, see OPTIONS
    x0 = [1.0, 0.0]

    [tolerances]                   # kind-specific overrides
    [output]                       # file names inside --out-dir
    report = "report.json"

Each run writes a JSON report (``<kind>_report.json``), a CSV table
(``<kind>_table.csv``) and a CSV of plot series (``<kind>_series.csv``).
The exit status is 0 exactly when every certificate passes, 1 when one
fails or is invalidated, 2 on a bad config and 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .acceptance import LengthCase, _pmap, length_case, length_trial, run_all
from .core import CertificateReport, Region, eval_objective
from .descent import StepSchedule, rate_certificate, run_gd
from .flow import energy_identity_residual, integrate_flow
from .kl import (CUBIC_PSI, Desingularizer, _tilde, calibrate_power, kl_check, uniform_decrease_experiment)
from .lipschitz import estimate_constants
from .problems import CATALOG, DESCRIPTIONS, balance_residual, factorization_bound_check, instance_of, make_problem
from .rng import INITS, substream
from .saddle import escape_monte_carlo, estimate_sigma
from .tracking import alpha_bar, taylor_residual_check, tracking_deviation

KINDS = ("gd", "flow", "tracking", "kl-check", "length-cert", "decrease", "saddle-mc", "sigma")
REQUIRED = object()

# option name -> (type, default); types are checked by _check_value
OPTIONS = {
    "gd": {"x0": ("vector", REQUIRED), "max_iter": ("count", 1_000_000), "grad_tol": ("nonneg", 1e-10),
           "escape_radius": ("pos", 1e6), "rate_alpha_lower": ("nonneg", None)},
    "flow": {"x0": ("vector", REQUIRED), "horizon": ("pos_or_inf", math.inf), "rel_tol": ("rel_tol", 1e-9),
             "escape_radius": ("pos", 1e3)},
    "tracking": {"x0": ("vector", REQUIRED), "T": ("pos", REQUIRED), "epsilon": ("unit", REQUIRED),
                 "rel_tol": ("rel_tol", 1e-9), "L": ("pos", None), "M": ("pos", None),
                 "n_lipschitz": ("count", 10_000), "n_pairs": ("count", 200)},
    "kl-check": {"psi": ("psi", None), "calibrate_theta": ("unit_closed", None), "V": ("floats", None),
                 "sampling": (("grid", "random"), "grid"), "n": ("count", 200), "exclude": ("exclude", [])},
    "length-cert": {"mode": (("continuous", "discrete", "both"), "both"), "n_trajectories": ("count", 50),
                    "psi": ("psi", None), "V": ("floats", None), "m": ("count", None), "inits": ("region", None),
                    "stop_radius": ("pos", None), "horizon": ("pos", 50.0), "max_iter": ("count", 20_000),
                    "eps": ("pos", 1.0), "rel_tol": ("rel_tol", 1e-9), "L": ("pos", None), "M": ("pos", None)},
    "decrease": {"alpha": ("pos", 5e-5), "n_inits": ("count", 500), "init_radius": ("pos", 0.3),
                 "exit_radius": ("pos", 0.8), "max_iter": ("count", 1_000_000), "psi": ("psi", None)},
    "saddle-mc": {"alpha": ("pos", REQUIRED), "n_trials": ("count", 1000), "max_iter": ("count", 200_000),
                  "grad_tol": ("pos", 1e-10), "max_fraction": ("unit_closed", 0.01)},
    "sigma": {"mode": (("continuous", "continuous_T", "discrete"), "continuous"), "n_samples": ("count", 100),
              "horizon": ("pos_or_inf", math.inf), "alpha_bar": ("nonneg", 0.0),
              "min_critical_value": ("real", None), "sup_f": ("real", None), "rel_tol": ("rel_tol", 1e-9),
              "max_iter": ("count", 200_000)},
}

TOLERANCES = {
    "gd": {"rate": 1e-12},
    "flow": {"energy": 1e-5, "chord": 1e-9, "balance": None, "bound": 1e-6},
    "tracking": {"taylor": None},
    "kl-check": {"kl": 1e-9},
    "length-cert": {"continuous": None, "discrete": None},
    "decrease": {"decrease": 0.0},
    "saddle-mc": {},
    "sigma": {"bound": 1e-6},
}

NEEDS_SCHEDULE = {"gd"}
NEEDS_REGION = {"kl-check", "saddle-mc", "sigma"}

# CSV headers; "{x}" expands to x_1..x_n, "{x0}" to x0_1.., "{xf}" to limit_1..
TABLES = {
    "gd": ("k,t,alpha,f,grad_norm,length,{x}", "k,f,grad_norm,length"),
    "flow": ("i,t,f,grad_norm,arc_length,energy,{x}", "t,f,grad_norm,arc_length"),
    "tracking": ("k,t,deviation,{gd},{fl}", "t,deviation"),
    "kl-check": ("i,{x},f,f_tilde,grad_norm,kl_value", "f_tilde,kl_value"),
    "length-cert": ("trajectory,mode,n_points,length,f_start,f_end,margin,passed,termination",
                    "trajectory,mode,length"),
    "decrease": ("trial,{x0},f0,f_exit,decrease,n_iter,exited", "trial,decrease"),
    "saddle-mc": ("trial,{x0},{xf},grad_norm,eig_min,eig_max,classification,termination",
                  "trial,saddle_fraction"),
    "sigma": ("sample,length,running_max", "sample,running_max"),
}


class ConfigError(ValueError):
    """A config failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ExperimentConfig:
    kind: str
    problem_id: str
    problem_params: dict
    options: dict
    tolerances: dict
    schedule: Optional[dict] = None
    region: Optional[dict] = None
    seed: int = 0
    output: dict = field(default_factory=dict)

    def build_problem(self):
        return make_problem(self.problem_id, **self.problem_params)

    def build_schedule(self, seed: int) -> Optional[StepSchedule]:
        s = self.schedule
        if s is None:
            return None
        if s["kind"] == "constant":
            return StepSchedule.constant(s["alpha"])
        if s["kind"] == "sequence":
            return StepSchedule.sequence(s["values"], alpha_lower=s.get("alpha_lower", 0.0))
        return StepSchedule.random(s["alpha_upper"], seed, alpha_lower=s.get("alpha_lower", 0.0))

    def build_region(self) -> Optional[Region]:
        return _region(self.region) if self.region is not None else None

    def as_dict(self) -> dict:
        return {"kind": self.kind, "problem": {"id": self.problem_id, "params": self.problem_params},
                "schedule": self.schedule, "region": self.region, "options": self.options,
                "tolerances": self.tolerances, "output": self.output}


def _region(d: dict) -> Region:
    if d["kind"] == "ball":
        return Region.ball(d["center"], d["radius"])
    return Region.box(d["center"], d["half_widths"])


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(name: str, kind, v, errors: list[str]):
    """Validate one option value; returns the normalised value."""
    def err(msg):
        errors.append(f"{name}: {msg}")

    if isinstance(kind, tuple):
        if v not in kind:
            err(f"must be one of {list(kind)}, got {v!r}")
        return v
    if kind in ("pos", "nonneg", "real", "unit", "unit_closed", "rel_tol", "pos_or_inf"):
        if not _is_num(v):
            err(f"must be a number, got {v!r}")
            return v
        v = float(v)
        ok = {"pos": math.isfinite(v) and v > 0, "nonneg": math.isfinite(v) and v >= 0,
              "real": math.isfinite(v), "unit": 0 < v < 1, "unit_closed": 0 < v <= 1,
              "rel_tol": 1e-13 < v < 1e-2, "pos_or_inf": v > 0}[kind]
        if not ok:
            err({"pos": "must be > 0", "nonneg": "must be >= 0", "real": "must be finite",
                 "unit": "must lie in (0, 1)", "unit_closed": "must lie in (0, 1]",
                 "rel_tol": "must lie in (1e-13, 1e-2)", "pos_or_inf": "must be > 0"}[kind] + f", got {v!r}")
        return v
    if kind == "count":
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            err(f"must be an integer >= 1, got {v!r}")
        return v
    if kind in ("vector", "floats"):
        if not isinstance(v, list) or not v or not all(_is_num(a) and math.isfinite(a) for a in v):
            err(f"must be a non-empty list of finite numbers, got {v!r}")
            return v
        return [float(a) for a in v]
    if kind == "psi":
        if not isinstance(v, dict):
            err("must be a table with c, theta and optional t_break")
            return v
        bad = set(v) - {"c", "theta", "t_break"}
        if bad:
            err(f"unknown keys {sorted(bad)}")
        c = _check_value(f"{name}.c", "pos", v.get("c"), errors)
        th = _check_value(f"{name}.theta", "unit_closed", v.get("theta"), errors)
        out = {"c": c, "theta": th}
        if "t_break" in v:
            out["t_break"] = _check_value(f"{name}.t_break", "pos_or_inf", v["t_break"], errors)
        return out
    if kind == "region":
        return _check_region(name, v, errors)
    if kind == "exclude":
        if not isinstance(v, list):
            err("must be a list of {normal, offset, width} tables")
            return v
        out = []
        for i, h in enumerate(v):
            if not isinstance(h, dict) or set(h) - {"normal", "offset", "width"}:
                err(f"entry {i} must have only keys normal, offset, width")
                continue
            out.append({"normal": _check_value(f"{name}[{i}].normal", "vector", h.get("normal"), errors),
                        "offset": _check_value(f"{name}[{i}].offset", "real", h.get("offset", 0.0), errors),
                        "width": _check_value(f"{name}[{i}].width", "pos", h.get("width"), errors)})
        return out
    raise AssertionError(kind)


def _check_region(name: str, d, errors: list[str]):
    if not isinstance(d, dict):
        errors.append(f"{name}: must be a table")
        return d
    kind = d.get("kind")
    allowed = {"ball": {"kind", "center", "radius"}, "box": {"kind", "center", "half_widths"}}
    if kind not in allowed:
        errors.append(f"{name}.kind: must be 'ball' or 'box', got {kind!r}")
        return d
    bad = set(d) - allowed[kind]
    if bad:
        errors.append(f"{name}: unknown keys {sorted(bad)}")
    out = {"kind": kind, "center": _check_value(f"{name}.center", "vector", d.get("center"), errors)}
    if kind == "ball":
        out["radius"] = _check_value(f"{name}.radius", "pos", d.get("radius"), errors)
    else:
        hw = d.get("half_widths")
        out["half_widths"] = _check_value(f"{name}.half_widths", "vector", hw, errors)
        if isinstance(out["half_widths"], list) and not all(h > 0 for h in out["half_widths"]):
            errors.append(f"{name}.half_widths: entries must be > 0")
    return out


def _check_schedule(d, errors: list[str]):
    if not isinstance(d, dict):
        errors.append("schedule: must be a table")
        return d
    kind = d.get("kind")
    allowed = {"constant": {"kind", "alpha"}, "sequence": {"kind", "values", "alpha_lower"},
               "random": {"kind", "alpha_upper", "alpha_lower"}}
    if kind not in allowed:
        errors.append(f"schedule.kind: must be one of {list(allowed)}, got {kind!r}")
        return d
    bad = set(d) - allowed[kind]
    if bad:
        errors.append(f"schedule: unknown keys {sorted(bad)}")
    out = {"kind": kind}
    if kind == "constant":
        out["alpha"] = _check_value("schedule.alpha", "pos", d.get("alpha"), errors)
    elif kind == "sequence":
        vals = _check_value("schedule.values", "floats", d.get("values"), errors)
        if isinstance(vals, list) and not all(a > 0 for a in vals):
            errors.append("schedule.values: step sizes must be > 0")
        out["values"] = vals
    else:
        out["alpha_upper"] = _check_value("schedule.alpha_upper", "pos", d.get("alpha_upper"), errors)
    if "alpha_lower" in d:
        out["alpha_lower"] = _check_value("schedule.alpha_lower", "nonneg", d["alpha_lower"], errors)
        up = out.get("alpha_upper") or (max(out["values"]) if isinstance(out.get("values"), list) else None)
        if _is_num(up) and _is_num(out["alpha_lower"]) and out["alpha_lower"] > up:
            errors.append("schedule.alpha_lower: must not exceed the step sizes")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a TOML experiment document.

    Raises :class:`ConfigError` carrying every validation error found.

    >>> cfg = parse_config('kind = "gd"\\n[problem]\\nid = "quadratic"\\n'
    ...                    '[schedule]\\nkind = "constant"\\nalpha = 0.5\\n[options]\\nx0 = [1.0, 0.0]\\n')
    >>> cfg.options["x0"], cfg.options["max_iter"]
    ([1.0, 0.0], 1000000)
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"malformed document: {e}"]) from None
    errors: list[str] = []
    top = {"kind", "seed", "problem", "schedule", "region", "options", "tolerances", "output"}
    bad = set(doc) - top
    if bad:
        errors.append(f"unknown top-level keys {sorted(bad)}")
    kind = doc.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: must be one of {list(KINDS)}, got {kind!r}")
        raise ConfigError(errors)

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"seed: must be a non-negative integer, got {seed!r}")

    prob = doc.get("problem")
    pid, params, problem = None, {}, None
    if not isinstance(prob, dict) or "id" not in prob:
        errors.append("problem: a table with an 'id' is required")
    else:
        if set(prob) - {"id", "params"}:
            errors.append(f"problem: unknown keys {sorted(set(prob) - {'id', 'params'})}")
        pid, params = prob["id"], prob.get("params", {})
        if pid not in CATALOG:
            errors.append(f"problem.id: unknown problem id {pid!r}; choose from {list(CATALOG)}")
        elif not isinstance(params, dict):
            errors.append("problem.params: must be a table")
        else:
            try:
                problem = make_problem(pid, **params)
            except (TypeError, ValueError) as e:
                errors.append(f"problem.params: {e}")

    schedule = None
    if "schedule" in doc:
        schedule = _check_schedule(doc["schedule"], errors)
    elif kind in NEEDS_SCHEDULE:
        errors.append("schedule: required for kind " + kind)

    region = None
    if "region" in doc:
        region = _check_region("region", doc["region"], errors)
    elif kind in NEEDS_REGION:
        errors.append("region: required for kind " + kind)

    allowed = OPTIONS[kind]
    given = doc.get("options", {})
    options = {}
    if not isinstance(given, dict):
        errors.append("options: must be a table")
        given = {}
    for k in sorted(set(given) - set(allowed)):
        errors.append(f"options.{k}: unknown option for kind {kind} (allowed: {sorted(allowed)})")
    for k, (typ, default) in allowed.items():
        if k in given:
            options[k] = _check_value(f"options.{k}", typ, given[k], errors)
        elif default is REQUIRED:
            errors.append(f"options.{k}: required for kind {kind}")
        else:
            options[k] = default

    tols = dict(TOLERANCES[kind])
    given_t = doc.get("tolerances", {})
    if not isinstance(given_t, dict):
        errors.append("tolerances: must be a table")
        given_t = {}
    for k, v in given_t.items():
        if k not in tols:
            errors.append(f"tolerances.{k}: unknown tolerance for kind {kind} (allowed: {sorted(tols)})")
        else:
            tols[k] = _check_value(f"tolerances.{k}", "nonneg", v, errors)

    output = doc.get("output", {})
    if not isinstance(output, dict) or set(output) - {"report", "table", "series"}:
        errors.append("output: only the keys report, table, series are allowed")
        output = {}
    elif not all(isinstance(v, str) and v for v in output.values()):
        errors.append("output: file names must be non-empty strings")

    # shape consistency
    if problem is not None:
        n = problem.dimension
        for k in ("x0",):
            if isinstance(options.get(k), list) and len(options[k]) != n:
                errors.append(f"options.{k}: has length {len(options[k])}, problem dimension is {n}")
        for nm, reg in (("region", region), ("options.inits", options.get("inits"))):
            if isinstance(reg, dict) and isinstance(reg.get("center"), list):
                if len(reg["center"]) != n:
                    errors.append(f"{nm}.center: has length {len(reg['center'])}, problem dimension is {n}")
                hw = reg.get("half_widths")
                if isinstance(hw, list) and len(hw) not in (1, n):
                    errors.append(f"{nm}.half_widths: has length {len(hw)}, problem dimension is {n}")
        for i, h in enumerate(options.get("exclude") or []):
            if isinstance(h.get("normal"), list) and len(h["normal"]) != n:
                errors.append(f"options.exclude[{i}].normal: has length {len(h['normal'])}, dimension is {n}")
    if kind == "kl-check" and options.get("psi") is None and options.get("calibrate_theta") is None:
        errors.append("options.psi: give psi or calibrate_theta for kind kl-check")
    if kind == "sigma" and options.get("mode") == "discrete" and not (options.get("alpha_bar") or 0) > 0:
        errors.append("options.alpha_bar: must be > 0 in discrete mode")
    if kind == "sigma" and options.get("mode") == "continuous_T" and not math.isfinite(options.get("horizon", 1)):
        errors.append("options.horizon: must be finite in continuous_T mode")
    if kind == "tracking" and (options.get("L") is None or options.get("M") is None) and region is None:
        errors.append("region: required for tracking when L or M is not given")
    if kind == "length-cert" and params and options.get("psi") is None:
        errors.append("options.psi: required for length-cert when problem params differ from the reference setup")
    if kind == "length-cert" and params and region is None:
        errors.append("region: required for length-cert when problem params differ from the reference setup")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, pid, params, options, tols, schedule, region, seed, output)


# ----------------------------------------------------------------------------
# experiment kinds; each returns (certificates, table rows, series rows, summary, dimension-expansions)


def _with_tol(rep: CertificateReport, tol: Optional[float]) -> CertificateReport:
    """Re-judge ``rep`` under an explicit tolerance override (``None`` keeps it)."""
    if tol is None or rep.invalidated or rep.reason:
        return rep
    return CertificateReport(rep.name, rep.margin, bool(rep.margin >= -tol), tol, rep.worst, rep.n_checked,
                             details=rep.details)


def _psi(d: Optional[dict], default: Desingularizer) -> Desingularizer:
    if d is None:
        return default
    return Desingularizer(d["c"], d["theta"], d.get("t_break", math.inf))


def _run_gd(cfg, problem, seed, threads):
    o = cfg.options
    sched = cfg.build_schedule(seed)
    tr = run_gd(problem, o["x0"], sched, max_iter=o["max_iter"], grad_tol=o["grad_tol"],
                escape_radius=o["escape_radius"])
    lo = sched.alpha_lower if o["rate_alpha_lower"] is None else o["rate_alpha_lower"]
    certs = []
    if lo > 0:
        certs.append(rate_certificate(tr, lo, tolerance=cfg.tolerances["rate"]))
    t = tr.times
    steps = np.append(tr.steps, np.nan)
    rows = [[k, t[k], steps[k], tr.f_values[k], tr.grad_norms[k], tr.cumulative_length[k], *tr.iterates[k]]
            for k in range(len(tr.iterates))]
    series = [[r[0], r[3], r[4], r[5]] for r in rows]
    summary = {"termination": tr.termination, "n_steps": tr.n_steps, "length": tr.length,
               "f_final": float(tr.f_values[-1]), "rate_alpha_lower": lo}
    return certs, rows, series, summary


def _run_flow(cfg, problem, seed, threads):
    o = cfg.options
    fl = integrate_flow(problem, o["x0"], horizon=o["horizon"], rel_tol=o["rel_tol"],
                        escape_radius=o["escape_radius"])
    tol = cfg.tolerances
    r = energy_identity_residual(fl, problem)
    certs = [CertificateReport.from_margins("energy_identity", [tol["energy"] - r], 0.0, residual=r)]
    chord = float(np.linalg.norm(fl.states[-1] - fl.states[0]))
    certs.append(CertificateReport.from_margins("arc_length_vs_chord", [fl.arc_length - chord], tol["chord"],
                                                arc_length=fl.arc_length, chord=chord))
    if problem.name in ("scalar_factorization", "matrix_factorization"):
        inst = instance_of(problem)
        X0, Y0 = inst.unpack(fl.states[0])
        res = max(balance_residual(*inst.unpack(z), X0, Y0) for z in fl.states)
        btol = tol["balance"] if tol["balance"] is not None else 100 * fl.rel_tol * (1 + fl.t_end)
        certs.append(CertificateReport.from_margins("balance_invariant", [btol - res], 0.0,
                                                    residual=res, limit=btol))
        certs.append(factorization_bound_check(fl, problem, tolerance=tol["bound"]))
    rows = [[i, fl.times[i], fl.f_values[i], np.linalg.norm(fl.derivs[i]), fl.arc_cumulative[i],
             fl.energy_cumulative[i], *fl.states[i]] for i in range(len(fl.times))]
    series = [[r[1], r[2], r[3], r[4]] for r in rows]
    summary = {"termination": fl.termination, "t_end": fl.t_end, "arc_length": fl.arc_length,
               "n_steps": len(fl.times) - 1, "n_rejected": fl.n_rejected}
    return certs, rows, series, summary


def _run_tracking(cfg, problem, seed, threads):
    o = cfg.options
    region = cfg.build_region()
    L, M = o["L"], o["M"]
    if L is None or M is None:
        est = estimate_constants(problem, region, n_samples=o["n_lipschitz"], seed=seed)
        L = est.L if L is None else L
        M = est.M if M is None else M
    ab = alpha_bar(o["epsilon"], o["T"], L, M)
    sched = cfg.build_schedule(seed) or StepSchedule.constant(ab)
    rep = tracking_deviation(problem, o["x0"], sched, o["T"], o["rel_tol"], o["epsilon"], L, M, region)
    certs = [rep.to_certificate()]
    if rep.flow is not None:
        c = taylor_residual_check(rep.flow, L, M, n_pairs=o["n_pairs"], seed=seed)
        certs.append(_with_tol(c, cfg.tolerances["taylor"]))
    rows = []
    if rep.times.size:
        xg = run_gd(problem, o["x0"], sched, max_iter=max(rep.times.size - 1, 1), grad_tol=0.0).iterates
        xf = rep.flow(np.minimum(rep.times, rep.flow.t_end))
        rows = [[k, rep.times[k], rep.deviations[k], *xg[k], *xf[k]] for k in range(rep.times.size)]
    series = [[r[1], r[2]] for r in rows]
    summary = {"alpha_bar": ab, "alpha_used": sched.alpha_upper, "L": L, "M": M, "variant": rep.variant,
               "max_deviation": rep.max_deviation}
    return certs, rows, series, summary


def _samples(cfg, problem, seed):
    o = cfg.options
    region = cfg.build_region()
    pts = region.grid(o["n"]) if o["sampling"] == "grid" else region.sample(substream(seed, INITS), o["n"])
    keep = np.ones(len(pts), dtype=bool)
    for h in o["exclude"]:
        nrm = np.asarray(h["normal"])
        keep &= np.abs(pts @ nrm - h["offset"]) / np.linalg.norm(nrm) > h["width"]
    return pts[keep]


def _run_kl(cfg, problem, seed, threads):
    o = cfg.options
    V = o["V"] if o["V"] is not None else list(problem.known_critical_values)
    pts = _samples(cfg, problem, seed)
    if o["psi"] is not None:
        psi = _psi(o["psi"], CUBIC_PSI)
    else:
        psi = calibrate_power(problem, V, pts, theta=o["calibrate_theta"])
    rep = kl_check(problem, psi, V, pts, tolerance=cfg.tolerances["kl"])
    rows = []
    for i, x in enumerate(pts):
        f, g = eval_objective(problem, x)
        ft = float(_tilde(f, V))
        gn = float(np.linalg.norm(g))
        rows.append([i, *x, f, ft, gn, float(psi.derivative(ft)) * gn if ft > 0 else math.nan])
    series = [[r[-3], r[-1]] for r in rows]
    return [rep], rows, series, {"psi_c": psi.c, "psi_theta": psi.theta, "V": V, "n_samples": len(pts)}


def _run_length(cfg, problem, seed, threads):
    o = cfg.options
    ref = length_case(cfg.problem_id, seed) if not cfg.problem_params else None
    V = tuple(o["V"]) if o["V"] is not None else (ref.V if ref else tuple(problem.known_critical_values))
    region = cfg.build_region() or ref.region
    inits = _region(o["inits"]) if o["inits"] is not None else (ref.inits if ref else region)
    case = LengthCase(problem, _psi(o["psi"], ref.psi if ref else None), V,
                      o["m"] if o["m"] is not None else (ref.m if ref else len(V)), inits, region,
                      o["stop_radius"] or (ref.stop_radius if ref else region.outer_radius),
                      o["horizon"], o["max_iter"])
    L, M = o["L"], o["M"]
    if L is None or M is None:
        est = case.constants(seed)
        L = est.L if L is None else L
        M = est.M if M is None else M
    modes = ("continuous", "discrete") if o["mode"] == "both" else (o["mode"],)
    n = o["n_trajectories"]
    X0 = [case.inits.sample(substream(seed, INITS, 7, j), 1)[0] for j in range(n)]
    certs, rows = [], []
    for mode in modes:
        out = _pmap(lambda j: length_trial(case, X0[j], mode, L, M, seed, j, rel_tol=o["rel_tol"], eps=o["eps"]),
                    range(n), threads)
        for j, (rep, tr) in enumerate(out):
            rep = _with_tol(rep, cfg.tolerances[mode])
            rep.details["trajectory"] = j
            certs.append(rep)
            length = tr.arc_length if mode == "continuous" else tr.length
            rows.append([j, mode, len(tr.times), length, tr.f_values[0], tr.f_values[-1], rep.margin,
                         rep.passed, tr.termination])
    series = [[r[0], r[1], r[3]] for r in rows]
    summary = {"psi_c": case.psi.c, "psi_theta": case.psi.theta, "V": list(V), "m": case.m, "L": L, "M": M,
               "n_passed": sum(c.passed for c in certs), "n_certificates": len(certs)}
    return certs, rows, series, summary


def _run_decrease(cfg, problem, seed, threads):
    o = cfg.options
    res = uniform_decrease_experiment(problem, alpha=o["alpha"], n_inits=o["n_inits"], seed=seed,
                                      init_radius=o["init_radius"], exit_radius=o["exit_radius"],
                                      max_iter=o["max_iter"], psi=_psi(o["psi"], CUBIC_PSI))
    rep = _with_tol(res.report, cfg.tolerances["decrease"])
    rows = [[i, *res.inits[i], res.f0[i], res.exit_f[i], res.f0[i] - res.exit_f[i], res.iterations[i],
             bool(res.exited[i])] for i in range(len(res.inits))]
    series = [[r[0], r[-3]] for r in rows if r[-1]]
    return [rep], rows, series, {"n_exited": res.n_exited, "n_inside": res.n_inside,
                                 "threshold": rep.details["threshold"], "min_decrease": rep.details["min_decrease"]}


def _run_saddle(cfg, problem, seed, threads):
    o = cfg.options
    res = escape_monte_carlo(problem, cfg.build_region(), o["alpha"], o["n_trials"], seed=seed,
                             grad_tol=o["grad_tol"], max_iter=o["max_iter"])
    rows, series, n_saddle = [], [], 0
    nan = [math.nan] * problem.dimension
    for i, (rep, term) in enumerate(zip(res.reports, res.terminations)):
        if rep is None:
            rows.append([i, *res.initial_points[i], *nan, math.nan, math.nan, math.nan, "not_critical", term])
        else:
            n_saddle += rep.classification == "strict_saddle"
            rows.append([i, *res.initial_points[i], *rep.point, rep.grad_norm, rep.eigenvalues[0],
                         rep.eigenvalues[-1], rep.classification, term])
        series.append([i, n_saddle / (i + 1)])
    return ([res.to_certificate(o["max_fraction"])], rows, series,
            {"saddle_fraction": res.saddle_fraction, "counts": res.counts, "n_nonconvergent": res.n_nonconvergent})


def _run_sigma(cfg, problem, seed, threads):
    o = cfg.options
    est = estimate_sigma(problem, cfg.build_region(), o["mode"], alpha_bar=o["alpha_bar"], horizon=o["horizon"],
                         n_samples=o["n_samples"], seed=seed, min_critical_value=o["min_critical_value"],
                         sup_f=o["sup_f"], rel_tol=o["rel_tol"], max_iter=o["max_iter"],
                         tolerance=cfg.tolerances["bound"])
    rows = [[i, est.lengths[i], est.running_max[i]] for i in range(est.lengths.size)]
    series = [[r[0], r[2]] for r in rows]
    certs = [est.report] if est.report is not None else []
    return certs, rows, series, {"max_length": est.max_length, "bound": est.bound, "blowup": est.blowup,
                                 "n_samples": est.n_samples, "note": est.note}


RUNNERS = {"gd": _run_gd, "flow": _run_flow, "tracking": _run_tracking, "kl-check": _run_kl,
           "length-cert": _run_length, "decrease": _run_decrease, "saddle-mc": _run_saddle, "sigma": _run_sigma}


# ----------------------------------------------------------------------------
# output


def build_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return f"gdcert-{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"gdcert-{__version__}"


def header(kind: str, n: int, which: int = 0) -> list[str]:
    cols = []
    for c in TABLES[kind][which].split(","):
        prefix = {"{x}": "x", "{x0}": "x0", "{xf}": "limit", "{gd}": "gd_x", "{fl}": "flow_x"}.get(c)
        cols.extend([f"{prefix}_{i + 1}" for i in range(n)] if prefix else [c])
    return cols


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(w) for k, w in v.items()}
        if isinstance(v, (list, tuple, np.ndarray)):
            return [clean(w) for w in (v.tolist() if isinstance(v, np.ndarray) else v)]
        if isinstance(v, (np.bool_,)):
            return bool(v)
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            v = float(v)
            return v if math.isfinite(v) else repr(v)
        return v
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: Path, seed: Optional[int] = None, threads: int = 1,
                   tolerance_scale: float = 1.0) -> tuple[int, dict]:
    """Run one validated experiment and write its report, table and series; returns ``(exit status, report)``."""
    seed = cfg.seed if seed is None else seed
    problem = cfg.build_problem()
    certs, rows, series, summary = RUNNERS[cfg.kind](cfg, problem, seed, threads)
    certs = [c.rescaled(tolerance_scale) for c in certs]
    passed = all(c.passed for c in certs)
    failed = [f"{c.name}: {c.reason or 'margin ' + repr(c.margin)}" for c in certs if not c.passed]
    report = {"build": build_string(), "kind": cfg.kind, "seed": seed, "tolerance_scale": tolerance_scale,
              "config": cfg.as_dict(), "certificates": [c.to_dict() for c in certs], "summary": summary,
              "passed": passed, "failures": failed[:50], "n_failures": len(failed)}
    n = problem.dimension
    files = {"report": cfg.output.get("report", f"{cfg.kind}_report.json"),
             "table": cfg.output.get("table", f"{cfg.kind}_table.csv"),
             "series": cfg.output.get("series", f"{cfg.kind}_series.csv")}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / files["table"]).write_text(_csv(header(cfg.kind, n, 0), rows))
    (out_dir / files["series"]).write_text(_csv(header(cfg.kind, n, 1), series))
    (out_dir / files["report"]).write_text(_json(report))
    return (0 if passed else 1), report


def _csv_help() -> str:
    lines = ["CSV columns per experiment kind. Braced groups expand over the problem dimension n:",
             "{x} -> x_1..x_n, {x0} -> x0_1..x0_n, {xf} -> limit_1..limit_n,",
             "{gd} -> gd_x_1..gd_x_n (iterate), {fl} -> flow_x_1..flow_x_n (flow at the same time).", ""]
    for k, (t, s) in TABLES.items():
        lines.append(f"  {k:12s} table:  {t}")
        lines.append(f"  {'':12s} series: {s}")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (default: config seed, or 0)")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="directory for report and CSV files")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent trials")
    common.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiply every certificate tolerance by this factor")
    ap = argparse.ArgumentParser(prog="gdcert", description=__doc__.split("\n\n")[0],
                                 epilog=_csv_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one experiment from a TOML config",
                         epilog=_csv_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config", type=Path)
    sub.add_parser("list-problems", help="list catalog objectives")
    sub.add_parser("verify", parents=[common], help="run the built-in acceptance suite")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-problems":
        for pid in CATALOG:
            print(f"{pid:22s} {DESCRIPTIONS[pid]}")
        return 0
    if args.threads < 1 or not args.tolerance_scale > 0:
        print("error: --threads must be >= 1 and --tolerance-scale > 0", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    if args.command == "verify":
        seed = 0 if args.seed is None else args.seed
        results = run_all(seed=seed, scale=args.tolerance_scale, threads=args.threads, echo=print)
        ok = all(r.passed for r in results)
        print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
        try:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / "verify_report.json").write_text(_json(
                {"build": build_string(), "seed": seed, "tolerance_scale": args.tolerance_scale,
                 "criteria": [r.to_dict() for r in results], "passed": ok}))
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return 3
        return 0 if ok else 1
    try:
        text = args.config.read_text()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 3
    try:
        cfg = parse_config(text)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    try:
        status, report = run_experiment(cfg, args.out_dir, args.seed, args.threads, args.tolerance_scale)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    for c in report["certificates"]:
        tag = "PASS" if c["passed"] else ("INVALID" if c["invalidated"] else "FAIL")
        extra = f" ({c['reason']})" if c["reason"] else ""
        print(f"[{tag}] {c['name']}: margin {c['margin']}{extra}")
    print("all certificates passed" if status == 0 else f"{report['n_failures']} certificate(s) failed")
    return status


if __name__ == "__main__":
    sys.exit(main())
