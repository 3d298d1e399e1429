"""Sampling estimates of the Lipschitz constants of f and grad f on a region."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ObjectiveProblem, Region, eval_objective
from .rng import LIPSCHITZ, substream

DEFAULT_INFLATION = 1.2
M_FLOOR = 1e-12
_CHUNK = 512


@dataclass(frozen=True)
class LipschitzEstimate:
    L: float
    M: float
    region: Region
    n_samples: int
    inflation: float
    seed: int = 0


def _chunk_points(region: Region, seed: int, j: int):
    """Chunk ``j`` of the sample stream: points, close partners and far partners."""
    rng = substream(seed, LIPSCHITZ, j)
    pts = region.sample(rng, _CHUNK)
    far = region.sample(rng, _CHUNK)
    # close partners probe the local (Hessian-scale) behaviour of grad f
    step = 1e-3 * region.outer_radius * rng.standard_normal((_CHUNK, region.dimension))
    near = pts + step
    inside = region.contains(near)
    near[~inside] = pts[~inside] - step[~inside]
    return pts, near, far


def estimate_constants(problem: ObjectiveProblem, region: Region, n_samples: int = 10_000,
                       seed: int = 0, inflation: float = DEFAULT_INFLATION) -> LipschitzEstimate:
    """Estimate ``L = sup ||grad f||`` and ``M = Lip(grad f)`` on ``region``.

    Sampled maxima are multiplied by ``inflation`` (>= 1). Sample ``i`` always
    comes from the same counter-based stream, so the estimate is
    nondecreasing in ``n_samples`` for a fixed seed.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if region.dimension != problem.dimension:
        raise ValueError("region and problem dimensions differ")
    if inflation < 1:
        raise ValueError("inflation must be >= 1")
    L = 0.0
    M = 0.0
    remaining = n_samples
    j = 0
    while remaining > 0:
        pts, near, far = _chunk_points(region, seed, j)
        take = min(remaining, _CHUNK)
        for i in range(take):
            g = eval_objective(problem, pts[i])[1]
            L = max(L, float(np.linalg.norm(g)))
            for y in (near[i], far[i]):
                dx = np.linalg.norm(pts[i] - y)
                if dx > 0:
                    gy = eval_objective(problem, y)[1]
                    M = max(M, float(np.linalg.norm(g - gy) / dx))
            if problem.hessian is not None:
                M = max(M, float(np.linalg.norm(problem.hessian(pts[i]), 2)))
        remaining -= take
        j += 1
    return LipschitzEstimate(
        L=max(inflation * L, M_FLOOR), M=max(inflation * M, M_FLOOR), region=region,
        n_samples=n_samples, inflation=inflation, seed=seed,
    )
