"""Numerical certificates for the gradient method and the gradient flow on nonconvex objectives.

Discrete runs (:mod:`gdcert.descent`) and continuous trajectories
(:mod:`gdcert.flow`) are checked against explicit length, tracking, rate and
Kurdyka-Lojasiewicz inequalities; every check returns a
:class:`~gdcert.core.CertificateReport`.
"""

from .core import CertificateReport, NonFiniteError, ObjectiveProblem, Region, eval_objective
from .descent import DiscreteTrajectory, StepSchedule, rate_certificate, run_gd
from .flow import FlowTrajectory, arc_length, energy_identity_residual, integrate_flow
from .kl import (Desingularizer, continuous_length_certificate, discrete_length_certificate, f_tilde,
                 kl_check, uniform_decrease_experiment)
from .lipschitz import LipschitzEstimate, estimate_constants
from .problems import CATALOG, make_problem
from .saddle import classify_critical_point, escape_monte_carlo, estimate_sigma
from .tracking import TrackingReport, alpha_bar, taylor_residual_check, tracking_deviation

__version__ = "0.1.0"

__all__ = [
    "CATALOG", "CertificateReport", "Desingularizer", "DiscreteTrajectory", "FlowTrajectory",
    "LipschitzEstimate", "NonFiniteError", "ObjectiveProblem", "Region", "StepSchedule", "TrackingReport",
    "alpha_bar", "arc_length", "classify_critical_point", "continuous_length_certificate",
    "discrete_length_certificate", "energy_identity_residual", "escape_monte_carlo", "estimate_constants",
    "estimate_sigma", "eval_objective", "f_tilde", "integrate_flow", "kl_check", "make_problem",
    "rate_certificate", "run_gd", "taylor_residual_check", "tracking_deviation",
    "uniform_decrease_experiment",
]
