"""Brute-force nearest decision-boundary search for low-dimensional checks.

A classifier here is any callable mapping an ``(N, d)`` batch of points in
[0,1]^d to ``N`` integer labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

DEFAULT_RESOLUTION = {1: 4096, 2: 512, 3: 64}


@dataclass(frozen=True)
class OracleConfig:
    grid_resolution: Optional[int] = None  # points per axis; None picks by dimension
    refine_bisections: int = 40
    norm: float = 2

    def __post_init__(self):
        if self.grid_resolution is not None and self.grid_resolution < 2:
            raise DomainError("grid_resolution must be >= 2")
        if self.refine_bisections < 1:
            raise DomainError("refine_bisections must be >= 1")

    def resolution(self, d):
        return self.grid_resolution or DEFAULT_RESOLUTION[d]


@dataclass
class OracleResult:
    distance: float  # inf when no boundary point was found
    witness: Optional[np.ndarray]

    @property
    def found(self) -> bool:
        return self.witness is not None


def grid_diagonal(resolution, d, p=2) -> float:
    """p-norm length of one grid cell diagonal."""
    h = 1.0 / (resolution - 1)
    return h if math.isinf(p) else h * d ** (1.0 / p)


def _labels(classify, pts, chunk=1 << 16):
    return np.concatenate([np.asarray(classify(pts[i:i + chunk])) for i in range(0, len(pts), chunk)])


def _bisect(classify, x0, label0, far, bisections):
    """Vectorized bisection on segments ``x0 -> far[i]`` whose far end has another label.

    Returns the fraction ``t`` of the first differently-labeled point found.
    """
    lo = np.zeros(len(far))
    hi = np.ones(len(far))
    seg = far - x0
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        same = _labels(classify, x0 + mid[:, None] * seg) == label0
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return hi


def nearest_boundary_grid(classify, x0, cfg: OracleConfig = OracleConfig()) -> OracleResult:
    """Smallest p-distance from ``x0`` to a label change found on a uniform grid.

    Grid nodes labeled differently from ``x0`` that lie within two cell
    diagonals of the closest such node are refined by bisection along the
    segment from ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if d > 3:
        raise DomainError("the grid oracle supports d <= 3 only")
    res = cfg.resolution(d)
    axis = np.linspace(0.0, 1.0, res)
    pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    label0 = int(np.asarray(classify(x0[None]))[0])
    other = pts[_labels(classify, pts) != label0]
    if other.shape[0] == 0:
        return OracleResult(math.inf, None)
    dist = np.linalg.norm(other - x0, ord=cfg.norm, axis=1)
    near = other[dist <= dist.min() + 2 * grid_diagonal(res, d, cfg.norm)]
    t = _bisect(classify, x0, label0, near, cfg.refine_bisections)
    witnesses = x0 + t[:, None] * (near - x0)
    wdist = np.linalg.norm(witnesses - x0, ord=cfg.norm, axis=1)
    best = int(np.argmin(wdist))
    return OracleResult(float(wdist[best]), witnesses[best])


def direction_bisect(classify, x0, direction, max_t, bisections=40, p=2) -> Optional[float]:
    """Distance along ``direction`` (normalized in p-norm) to a label change.

    Returns None when the label at ``x0 + max_t * direction`` equals the label at ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u, ord=p)
    label0 = int(np.asarray(classify(x0[None]))[0])
    far = x0 + max_t * u
    if int(np.asarray(classify(far[None]))[0]) == label0:
        return None
    t = _bisect(classify, x0, label0, far[None], bisections)[0]
    return float(t * max_t)
