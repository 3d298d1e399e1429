"""Catalog of test objectives with analytic derivatives and known critical structure."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import CertificateReport, ObjectiveProblem, as_vector

CATALOG = ("quadratic", "cubic_saddle", "negative_quartic", "scalar_factorization", "matrix_factorization")

DESCRIPTIONS = {
    "quadratic": "0.5*||x||^2 on R^n (params: n=2)",
    "cubic_saddle": "x1^3 - x1^2*x2 on R^2; critical line x1=0, unbounded below",
    "negative_quartic": "-x^4/4 on R; gradient trajectories blow up at t = x0^-2/2",
    "scalar_factorization": "(x*y - M)^2 on R^2 (params: M=1); strict saddle at the origin",
    "matrix_factorization": "||X Y^T - M||_F^2, X m-by-r, Y n-by-r (params: M row-major, shape, r)",
}


def _quadratic(n: int = 2) -> ObjectiveProblem:
    n = int(n)
    return ObjectiveProblem(
        name="quadratic",
        dimension=n,
        value=lambda x: 0.5 * float(x @ x),
        gradient=lambda x: np.array(x, dtype=float),
        hessian=lambda x: np.eye(n),
        known_critical_values=(0.0,),
        params={"n": n},
        batch_value=lambda X: 0.5 * np.einsum("ij,ij->i", X, X),
        batch_gradient=lambda X: np.array(X, dtype=float),
    )


def _cubic_value(x):
    return x[..., 0] ** 3 - x[..., 0] ** 2 * x[..., 1]


def _cubic_gradient(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([3 * x1**2 - 2 * x1 * x2, -(x1**2)], axis=-1)


def _cubic_saddle() -> ObjectiveProblem:
    def hess(x):
        x1, x2 = x
        return np.array([[6 * x1 - 2 * x2, -2 * x1], [-2 * x1, 0.0]])

    return ObjectiveProblem(
        name="cubic_saddle",
        dimension=2,
        value=lambda x: float(_cubic_value(x)),
        gradient=_cubic_gradient,
        hessian=hess,
        known_critical_values=(0.0,),
        lower_bounded=False,
        batch_value=_cubic_value,
        batch_gradient=_cubic_gradient,
    )


def _negative_quartic() -> ObjectiveProblem:
    return ObjectiveProblem(
        name="negative_quartic",
        dimension=1,
        value=lambda x: float(-x[0] ** 4 / 4),
        gradient=lambda x: -(x**3),
        hessian=lambda x: np.array([[-3 * x[0] ** 2]]),
        known_critical_values=(0.0,),
        lower_bounded=False,
        batch_value=lambda X: -X[:, 0] ** 4 / 4,
        batch_gradient=lambda X: -(X**3),
    )


def _scalar_factorization(M: float = 1.0) -> ObjectiveProblem:
    M = float(M)

    def value(z):
        return (z[..., 0] * z[..., 1] - M) ** 2

    def gradient(z):
        x, y = z[..., 0], z[..., 1]
        r = 2 * (x * y - M)
        return np.stack([r * y, r * x], axis=-1)

    def hess(z):
        x, y = z
        off = 2 * (2 * x * y - M)
        return np.array([[2 * y * y, off], [off, 2 * x * x]])

    return ObjectiveProblem(
        name="scalar_factorization",
        dimension=2,
        value=lambda z: float(value(z)),
        gradient=gradient,
        hessian=hess,
        known_critical_values=sorted({0.0, M * M}),
        params={"M": M},
        batch_value=value,
        batch_gradient=gradient,
    )


@dataclass(frozen=True)
class FactorizationInstance:
    """Shapes and target of ``||X Y^T - M||^2``; factors packed column-major."""

    M: np.ndarray
    r: int

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if M.ndim != 2:
            raise ValueError("M must be a matrix")
        if int(self.r) < 1:
            raise ValueError("rank r must be >= 1")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "r", int(self.r))

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.M.shape[1]

    @property
    def size(self) -> int:
        return (self.m + self.n) * self.r

    def pack(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(self.m, self.r)
        Y = np.asarray(Y, dtype=float).reshape(self.n, self.r)
        return np.concatenate([X.ravel(order="F"), Y.ravel(order="F")])

    def unpack(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.size,):
            raise ValueError(f"packed vector must have length {self.size}")
        k = self.m * self.r
        return z[:k].reshape(self.m, self.r, order="F"), z[k:].reshape(self.n, self.r, order="F")

    def critical_values(self) -> list[float]:
        """Residuals ``sum_{i not in S} s_i^2`` over index sets ``|S| <= r``.

        The critical points of the factorized objective are the products
        ``X Y^T`` equal to a partial SVD of ``M`` on some index set S.
        """
        s2 = np.linalg.svd(self.M, compute_uv=False) ** 2
        total = float(s2.sum())
        vals = []
        for k in range(min(self.r, s2.size) + 1):
            for S in itertools.combinations(range(s2.size), k):
                vals.append(max(total - float(s2[list(S)].sum()), 0.0))
        out: list[float] = []
        for v in sorted(vals):
            if not out or v - out[-1] > 1e-12 * (1 + abs(v)):
                out.append(v)
        return out


def _matrix_factorization(M=None, shape=None, r: int = 1) -> ObjectiveProblem:
    if M is None:
        M = np.eye(2)
    M = np.asarray(M, dtype=float)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if M.size != shape[0] * shape[1]:
            raise ValueError(f"M has {M.size} entries, incompatible with shape {shape}")
        M = M.reshape(shape)
    elif M.ndim != 2:
        raise ValueError("M must be given as a matrix or with an explicit shape")
    inst = FactorizationInstance(M, r)

    def value(z):
        X, Y = inst.unpack(z)
        R = X @ Y.T - inst.M
        return float(np.sum(R * R))

    def gradient(z):
        X, Y = inst.unpack(z)
        R = X @ Y.T - inst.M
        return inst.pack(2 * R @ Y, 2 * R.T @ X)

    def hess(z):
        X, Y = inst.unpack(z)
        R = X @ Y.T - inst.M
        H = np.empty((inst.size, inst.size))
        for j in range(inst.size):
            dX, dY = inst.unpack(np.eye(inst.size)[j])
            dR = dX @ Y.T + X @ dY.T
            H[:, j] = inst.pack(2 * (dR @ Y + R @ dY), 2 * (dR.T @ X + R.T @ dX))
        return 0.5 * (H + H.T)

    return ObjectiveProblem(
        name="matrix_factorization",
        dimension=inst.size,
        value=value,
        gradient=gradient,
        hessian=hess,
        known_critical_values=inst.critical_values(),
        params={"M": inst.M.tolist(), "shape": list(inst.M.shape), "r": inst.r, "instance": inst},
    )


_BUILDERS = {
    "quadratic": _quadratic,
    "cubic_saddle": _cubic_saddle,
    "negative_quartic": _negative_quartic,
    "scalar_factorization": _scalar_factorization,
    "matrix_factorization": _matrix_factorization,
}


def make_problem(problem_id: str, **params) -> ObjectiveProblem:
    """Build a catalog objective.

    >>> make_problem("cubic_saddle").value(np.array([0.5, 0.25]))
    0.0625
    """
    try:
        builder = _BUILDERS[problem_id]
    except KeyError:
        raise ValueError(f"unknown problem id {problem_id!r}; choose from {CATALOG}") from None
    return builder(**params)


def random_factorization(rng: np.random.Generator, m: int = 2, n: int = 2, r: int = 1,
                         scale: float = 1.0) -> tuple[ObjectiveProblem, np.ndarray]:
    """A factorization problem with Gaussian target and a Gaussian initial point."""
    prob = make_problem("matrix_factorization", M=rng.standard_normal((m, n)), r=r)
    z0 = scale * rng.standard_normal(prob.dimension)
    return prob, z0


def instance_of(problem: ObjectiveProblem) -> FactorizationInstance:
    """Factorization shapes for either factorization problem (scalar is 1x1, r=1)."""
    if problem.name == "matrix_factorization":
        return problem.params["instance"]
    if problem.name == "scalar_factorization":
        return FactorizationInstance(np.array([[problem.params["M"]]]), 1)
    raise ValueError(f"{problem.name} is not a factorization problem")


def balance_residual(X, Y, X0, Y0) -> float:
    """Frobenius drift of ``X^T X - Y^T Y`` from its initial value."""
    X, Y, X0, Y0 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (X, Y, X0, Y0))
    if X.shape != X0.shape or Y.shape != Y0.shape or X.shape[1] != Y.shape[1]:
        raise ValueError("inconsistent factor shapes")
    D = (X.T @ X - Y.T @ Y) - (X0.T @ X0 - Y0.T @ Y0)
    return float(np.linalg.norm(D))


def spectral_norm(A) -> float:
    return float(np.linalg.svd(np.atleast_2d(A), compute_uv=False)[0])


def factorization_bound(inst: FactorizationInstance, X0, Y0) -> float:
    """Right-hand side of the a-priori bound on ``||X||_2^4 + ||Y||_2^4``."""
    B0 = X0.T @ X0 - Y0.T @ Y0
    return float(np.sum(B0 * B0) + 2 * (np.linalg.norm(X0 @ Y0.T - inst.M) + np.linalg.norm(inst.M)) ** 2)


def factorization_bound_check(flow, problem: ObjectiveProblem, tolerance: float = 1e-6) -> CertificateReport:
    """Check ``||X||_2^4 + ||Y||_2^4`` against its initial-value bound at every flow node."""
    inst = instance_of(problem)
    X0, Y0 = inst.unpack(as_vector(flow.states[0]))
    bound = factorization_bound(inst, X0, Y0)
    margins = []
    for z in flow.states:
        X, Y = inst.unpack(z)
        margins.append(bound - (spectral_norm(X) ** 4 + spectral_norm(Y) ** 4))
    return CertificateReport.from_margins(
        "factorization_bound", margins, tolerance, instances=list(flow.times),
        bound=bound, margin_at_start=float(margins[0]),
    )
