"""Objective abstraction, regions, certificate reports and finite-difference oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an objective returns NaN or infinity."""

    def __init__(self, message: str, x: Optional[np.ndarray] = None):
        super().__init__(message)
        self.x = None if x is None else np.array(x)


def as_vector(x, n: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a 1-D float array, checking finiteness and dimension."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"dimension mismatch: expected {n}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("vector has non-finite entries", v)
    return v


@dataclass(frozen=True)
class ObjectiveProblem:
    """A continuously differentiable objective with analytic gradient.

    ``batch_value`` / ``batch_gradient``, when given, accept arrays of shape
    ``(N, n)`` and are used by the vectorised Monte-Carlo drivers.
    """

    name: str
    dimension: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_critical_values: tuple = ()
    known_lipschitz: Optional[tuple] = None
    lower_bounded: bool = True
    params: dict = field(default_factory=dict)
    batch_value: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(
            self, "known_critical_values", tuple(sorted(float(v) for v in self.known_critical_values))
        )


def eval_objective(problem: ObjectiveProblem, x) -> tuple[float, np.ndarray]:
    """Evaluate ``f(x)`` and ``grad f(x)``.

    Raises
    ------
    ValueError
        On dimension mismatch.
    NonFiniteError
        If the input or either output is not finite.
    """
    x = as_vector(x, problem.dimension)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            val = float(problem.value(x))
            grad = np.asarray(problem.gradient(x), dtype=float).reshape(problem.dimension)
    except OverflowError:
        raise NonFiniteError(f"{problem.name}: overflow in objective", x) from None
    if not (np.isfinite(val) and np.all(np.isfinite(grad))):
        raise NonFiniteError(f"{problem.name}: non-finite objective output", x)
    return val, grad


def default_step(x) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(x)))


def finite_diff_gradient(problem: ObjectiveProblem, x, h: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    x = as_vector(x, problem.dimension)
    if h is None:
        h = default_step(x)
    if not h > 0:
        raise ValueError("h must be positive")
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        fp = eval_objective(problem, x + e)[0]
        fm = eval_objective(problem, x - e)[0]
        e[i] = 0.0
        g[i] = (fp - fm) / (2 * h)
    return g


def finite_diff_hessian(problem: ObjectiveProblem, x, h: Optional[float] = None) -> np.ndarray:
    """Symmetrised central differences of the analytic gradient.

    Differencing the gradient (rather than the value twice) keeps the error at
    O(h^2) with one division by ``h`` instead of ``h**2``.
    """
    x = as_vector(x, problem.dimension)
    if h is None:
        h = default_step(x)
    if not h > 0:
        raise ValueError("h must be positive")
    n = x.size
    H = np.empty((n, n))
    e = np.zeros_like(x)
    for i in range(n):
        e[i] = h
        gp = eval_objective(problem, x + e)[1]
        gm = eval_objective(problem, x - e)[1]
        e[i] = 0.0
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class Region:
    """A ball (``radius``) or an axis-aligned box (``half_widths``)."""

    kind: str
    center: np.ndarray
    radius: Optional[float] = None
    half_widths: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if self.kind == "ball":
            if self.radius is None or not float(self.radius) > 0:
                raise ValueError("ball radius must be > 0")
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == "box":
            hw = np.broadcast_to(np.asarray(self.half_widths, dtype=float), self.center.shape).copy()
            if not np.all(hw > 0):
                raise ValueError("box half-widths must be > 0")
            object.__setattr__(self, "half_widths", hw)
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def ball(cls, center, radius: float) -> "Region":
        return cls("ball", np.atleast_1d(np.asarray(center, dtype=float)), radius=radius)

    @classmethod
    def box(cls, center, half_widths) -> "Region":
        return cls("box", np.atleast_1d(np.asarray(center, dtype=float)), half_widths=half_widths)

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def outer_radius(self) -> float:
        """Radius of the smallest ball about ``center`` containing the region."""
        if self.kind == "ball":
            return self.radius
        return float(np.linalg.norm(self.half_widths))

    def contains(self, x, slack: float = 0.0) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        d = x - self.center
        if self.kind == "ball":
            return np.linalg.norm(d, axis=-1) <= self.radius + slack
        return np.all(np.abs(d) <= self.half_widths + slack, axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples, shape ``(size, n)``."""
        n = self.dimension
        if self.kind == "ball":
            z = rng.standard_normal((size, n))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            r = self.radius * rng.random(size) ** (1.0 / n)
            return self.center + z * r[:, None]
        return self.center + rng.uniform(-1.0, 1.0, (size, n)) * self.half_widths

    def grid(self, n_per_axis: int) -> np.ndarray:
        """Points of the regular ``n_per_axis``-per-axis grid on the bounding box that lie in the region."""
        if n_per_axis < 2:
            raise ValueError("need at least 2 grid points per axis")
        hw = self.half_widths if self.kind == "box" else np.full(self.dimension, self.radius)
        axes = [np.linspace(c - w, c + w, n_per_axis) for c, w in zip(self.center, hw)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dimension)
        return pts[self.contains(pts)]


@dataclass
class CertificateReport:
    """Outcome of checking one inequality over a set of instances.

    ``margin`` is the minimum over instances of (right side - left side),
    possibly normalised; ``passed`` is ``margin >= -tolerance`` unless the
    report was invalidated by a failed precondition.
    """

    name: str
    margin: float
    passed: bool
    tolerance: float
    worst: Any = None
    n_checked: int = 0
    invalidated: bool = False
    reason: str = ""
    details: dict = field(default_factory=dict)

    @classmethod
    def from_margins(cls, name: str, margins: Sequence[float], tolerance: float,
                     instances: Optional[Sequence[Any]] = None, **details) -> "CertificateReport":
        m = np.asarray(margins, dtype=float)
        if m.size == 0:
            return cls(name, float("inf"), True, tolerance, None, 0, details=details)
        i = int(np.argmin(m))
        worst = i if instances is None else instances[i]
        if isinstance(worst, np.ndarray):
            worst = worst.tolist()
        margin = float(m[i])
        return cls(name, margin, bool(margin >= -tolerance), tolerance, worst, int(m.size), details=details)

    @classmethod
    def invalid(cls, name: str, reason: str, tolerance: float = 0.0, **details) -> "CertificateReport":
        return cls(name, float("nan"), False, tolerance, None, 0, True, reason, details)

    def rescaled(self, scale: float) -> "CertificateReport":
        """Copy with tolerance multiplied by ``scale`` and the pass flag re-evaluated.

        Invalidated reports and reports failed for a stated reason stay failed.
        """
        if not scale > 0:
            raise ValueError("scale must be > 0")
        tol = self.tolerance * scale
        passed = self.passed if (self.invalidated or self.reason) else bool(self.margin >= -tol)
        return CertificateReport(self.name, self.margin, passed, tol, self.worst, self.n_checked,
                                 self.invalidated, self.reason, dict(self.details))

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, float) and not np.isfinite(v):
                return repr(v)
            if isinstance(v, dict):
                return {k: clean(w) for k, w in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(w) for w in v]
            return v

        return clean({
            "name": self.name, "margin": self.margin, "passed": self.passed,
            "tolerance": self.tolerance, "worst": self.worst, "n_checked": self.n_checked,
            "invalidated": self.invalidated, "reason": self.reason, "details": self.details,
        })
