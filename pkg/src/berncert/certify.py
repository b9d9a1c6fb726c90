"""Certified radii for Bernstein-smoothed classifiers.

Pipeline per input: features ``x0 = G(input)``, smoothed logits at ``x0``,
boundary system anchored at ``x0``, a least-squares solve started from
``x0``, projection of the solution into the unit cube, and the radius
``||x0 - sol||_p``. Radii are measured in feature space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bernstein import BernsteinSmoother, precompute_grid
from .boundary import BoundarySystem
from .errors import ConstraintError, DomainError
from .model import MlpModel
from .solvers import SolverConfig, solve, trust_region_solve


# Sum-of-squares tolerance for certification solves. The generic solver
# default (1.49e-8) stops LM up to ~1e-4 short of the boundary.
CERT_F_TOL = 1e-24
CERT_SOLVER = SolverConfig(f_tol=CERT_F_TOL)


def pnorm(v, p) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float), ord=p))


def check_p(p) -> float:
    p = float(p)
    if not p > 1:
        raise DomainError(f"norm order p must be > 1 or inf, got {p}")
    return p


@dataclass
class CertResult:
    index: int
    label: int
    prediction: int
    radius: float
    p: float
    boundary_point: np.ndarray
    anchor: np.ndarray
    residual_norm_sq: float
    converged: bool
    xi: float
    c_param: float
    iterations: int = 0
    termination: str = ""
    rho: tuple = ()
    anchor_residual: float = 0.0  # ||phi(x0)||_2
    extra: dict = field(default_factory=dict)

    @property
    def correct(self) -> bool:
        return self.prediction == self.label


def smoother_for(model: MlpModel, n: int, max_grid=None) -> BernsteinSmoother:
    """Bernstein smoother of the model's classifier head over [0,1]^d."""
    kw = {} if max_grid is None else {"max_grid": max_grid}
    return precompute_grid(model.logits, n, model.d, **kw)


def predict_smoothed(inputs, model: MlpModel, smoother: BernsteinSmoother):
    return smoother.predict(model.features(inputs))


def certify_point(x0, smoother: BernsteinSmoother, p=2, c=math.inf, cfg: SolverConfig = CERT_SOLVER,
                  *, index=0, label=-1, allow_truncation=False, trace=None) -> CertResult:
    """Certify a feature point ``x0`` in [0,1]^d directly."""
    p = check_p(p)
    x0 = np.asarray(x0, dtype=float)
    if smoother.dim > smoother.num_classes and not allow_truncation:
        raise ConstraintError(
            f"feature dimension d={smoother.dim} exceeds the number of classes K={smoother.num_classes}")
    system = BoundarySystem.at(smoother, x0, c)
    phi0 = system.residual(x0)
    box = (np.zeros(smoother.dim), np.ones(smoother.dim))
    report = solve(system.residual, system.jacobian, x0, cfg, box=box, trace=trace)
    sol = np.clip(report.solution, 0.0, 1.0)
    return CertResult(
        index=index,
        label=int(label),
        prediction=system.rho[0],
        radius=pnorm(x0 - sol, p),
        p=p,
        boundary_point=sol,
        anchor=x0,
        residual_norm_sq=report.residual_norm_sq,
        converged=report.converged,
        xi=system.xi,
        c_param=c,
        iterations=report.iterations,
        termination=report.termination,
        rho=system.rho,
        anchor_residual=float(np.linalg.norm(phi0)),
    )


def certify(inputs, model: MlpModel, smoother: BernsteinSmoother, p=2, c=math.inf,
            cfg: SolverConfig = CERT_SOLVER, *, index=0, label=-1, allow_truncation=False,
            trace=None) -> CertResult:
    """Certified feature-space radius of one input vector."""
    if smoother.dim != model.d:
        raise ConstraintError("smoother dimension does not match the model's feature dimension")
    x0 = model.features(np.asarray(inputs, dtype=float))
    return certify_point(x0, smoother, p, c, cfg, index=index, label=label,
                         allow_truncation=allow_truncation, trace=trace)


def certify_2d(x0, system: BoundarySystem, cfg: SolverConfig = None, *, reg_weight=1.0, p=2,
               index=0, label=-1) -> CertResult:
    """Minimise ``0.5 phi_0(x)^2 + w ||x0 - x||^2`` by trust region over [0,1]^2."""
    if system.dim != 2:
        raise DomainError("certify_2d needs a two-dimensional feature space")
    if reg_weight < 0:
        raise DomainError("reg_weight must be non-negative")
    cfg = cfg or SolverConfig(method="trust_region", f_tol=CERT_F_TOL)
    x0 = np.asarray(x0, dtype=float)
    scale = math.sqrt(2.0 * reg_weight)

    def fun(x):
        return np.concatenate([[system.residual(x)[0]], scale * (x - x0)])

    def jac(x):
        return np.vstack([system.jacobian(x)[:1], scale * np.eye(2)])

    report = trust_region_solve(fun, jac, x0, cfg, bounds=(0.0, 1.0))
    sol = np.clip(report.solution, 0.0, 1.0)
    return CertResult(
        index=index, label=int(label), prediction=system.rho[0], radius=pnorm(x0 - sol, p), p=float(p),
        boundary_point=sol, anchor=x0, residual_norm_sq=report.residual_norm_sq,
        converged=report.converged, xi=system.xi, c_param=system.c_param,
        iterations=report.iterations, termination=report.termination, rho=system.rho,
        anchor_residual=abs(float(system.residual(x0)[0])),
    )


def certified_curve(results: Sequence[CertResult], radii, exclude_unconverged=False):
    """Fraction of examples that are correct and certified at each radius.

    With ``exclude_unconverged`` a non-converged result counts as certified
    only at radius 0.
    """
    if not results:
        raise DomainError("no results to aggregate")
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise DomainError("radii must be sorted ascending")
    correct = np.array([r.correct for r in results])
    rad = np.array([0.0 if exclude_unconverged and not r.converged else r.radius for r in results])
    n = len(results)
    return [(r, float(np.sum(correct & (rad >= r))) / n) for r in radii]


def sample_sphere(rng, dim, count, p):
    """Gaussian directions normalized to unit p-norm."""
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, ord=p, axis=1, keepdims=True)


def ball_sampling_check(result: CertResult, smoother: BernsteinSmoother, samples=1000, shrink=0.999,
                       seed=0, max_draws=None) -> Optional[int]:
    """Count prediction flips among perturbations of p-norm ``shrink * R``.

    Perturbations leaving the unit cube are rejected and redrawn. Returns
    None when the radius is zero (nothing to check).
    """
    if result.radius <= 0:
        return None
    rng = np.random.default_rng(seed)
    x0 = result.anchor
    limit = max_draws or 50 * samples
    flips = accepted = drawn = 0
    while accepted < samples and drawn < limit:
        batch = min(samples - accepted, limit - drawn)
        pts = x0 + shrink * result.radius * sample_sphere(rng, x0.size, batch, result.p)
        drawn += batch
        inside = np.all((pts >= 0) & (pts <= 1), axis=1)
        pts = pts[inside]
        accepted += pts.shape[0]
        if pts.shape[0]:
            flips += int(np.sum(smoother.predict(pts) != result.prediction))
    return flips
