"""Newton, Gauss-Newton and Levenberg-Marquardt steps and drivers.

All solvers minimise ``F(x) = 0.5 * ||phi(x)||^2`` for a residual map
``phi: R^n -> R^m`` with Jacobian ``jac``. Iterates can be confined to a box
by componentwise projection.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError, RankDeficientWarning, SingularSystemError
from .linalg import lstsq

METHODS = ("newton", "gauss_newton", "lm", "trust_region")
TERMINATIONS = ("f_tol", "x_tol", "max_iters", "trust_radius_collapse")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "lm"
    max_iters: int = 200
    f_tol: float = 1.49e-8
    x_tol: float = 1.49e-8
    mu0_scale: float = 1e-3
    gn_step_alpha: float = 1.0
    tr_delta0: float = 1.0
    tr_delta_max: float = 100.0
    tr_eta: float = 1e-4
    subproblem_norm: float = 2

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}")
        if self.max_iters < 0 or self.f_tol <= 0 or self.x_tol <= 0:
            raise DomainError("tolerances must be positive and max_iters non-negative")
        if not 0 <= self.tr_eta < 0.25:
            raise DomainError("tr_eta must lie in [0, 1/4)")
        if not 0 < self.tr_delta0 < self.tr_delta_max:
            raise DomainError("need 0 < tr_delta0 < tr_delta_max")
        if self.subproblem_norm not in (2, math.inf):
            raise DomainError("subproblem_norm must be 2 (dogleg) or inf (dogbox)")
        if self.mu0_scale <= 0 or self.gn_step_alpha <= 0:
            raise DomainError("mu0_scale and gn_step_alpha must be positive")


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm_sq: float  # 0.5 * ||phi||^2 at the solution
    iterations: int
    termination: str
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination in ("f_tol", "x_tol")


def _project(x, box):
    if box is None:
        return x
    return np.clip(x, box[0], box[1])


def _x_small(step_norm, x, cfg):
    return step_norm <= cfg.x_tol * (cfg.x_tol + np.linalg.norm(x))


class _Tracer:
    def __init__(self, sink):
        self.sink = sink
        self.records = []

    def __call__(self, **rec):
        rec = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in rec.items()}
        self.records.append(rec)
        if self.sink is not None:
            self.sink.write(json.dumps(rec) + "\n")


# --- steps ------------------------------------------------------------------

def newton_step(fun: Callable, jac: Callable, x) -> np.ndarray:
    """Solve ``J(x) h = -phi(x)``; minimum-norm when J is rank deficient."""
    x = np.asarray(x, dtype=float)
    j = np.atleast_2d(jac(x))
    h, rank = lstsq(j, -np.atleast_1d(fun(x)))
    if rank < min(j.shape):
        warnings.warn(f"Newton system is rank deficient (rank {rank} of {min(j.shape)})",
                      RankDeficientWarning, stacklevel=2)
    return h


def gauss_newton_step(j, phi) -> np.ndarray:
    """Gauss-Newton step: the solution of ``J^T J h = -J^T phi``.

    Solved through pivoted QR of J rather than by forming J^T J.
    """
    j = np.atleast_2d(np.asarray(j, dtype=float))
    h, rank = lstsq(j, -np.asarray(phi, dtype=float))
    if rank < j.shape[1]:
        raise SingularSystemError(
            f"J^T J is singular (rank {rank} < {j.shape[1]}); use the Levenberg-Marquardt step")
    return h


def lm_step(j, phi, mu: float) -> np.ndarray:
    """Damped step solving ``(J^T J + mu I) h = -J^T phi``.

    Formulated as the least-squares problem ``[J; sqrt(mu) I] h = [-phi; 0]``.
    """
    if mu < 0:
        raise DomainError("damping mu must be non-negative")
    j = np.atleast_2d(np.asarray(j, dtype=float))
    phi = np.asarray(phi, dtype=float)
    n = j.shape[1]
    a = np.vstack([j, math.sqrt(mu) * np.eye(n)])
    rhs = np.concatenate([-phi, np.zeros(n)])
    return lstsq(a, rhs)[0]


def finite_diff_jacobian(fun: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, shape ``(m, n)``."""
    if step <= 0:
        raise DomainError("step must be positive")
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


# --- drivers ----------------------------------------------------------------

def solve_lm(fun, jac, x0, cfg: SolverConfig = SolverConfig(), box=None, trace=None) -> SolveReport:
    """Levenberg-Marquardt with gain-ratio damping control.

    mu starts at ``mu0_scale * max(diag(J^T J))``; an accepted step with gain
    ratio r scales it by ``max(1/3, 1 - (2r - 1)^3)``, a rejected one doubles it.
    """
    tr = _Tracer(trace)
    x = _project(np.array(x0, dtype=float), box)
    f = np.asarray(fun(x), dtype=float)
    j = np.atleast_2d(jac(x))
    fsq = float(f @ f)
    if fsq < cfg.f_tol:
        return SolveReport(x, 0.5 * fsq, 0, "f_tol", tr.records)
    mu = cfg.mu0_scale * float(np.max(np.sum(j * j, axis=0)))
    if mu == 0.0:
        mu = cfg.mu0_scale
    termination = "max_iters"
    k = 0
    while k < cfg.max_iters:
        k += 1
        h = lm_step(j, f, mu)
        hn = float(np.linalg.norm(h))
        if _x_small(hn, x, cfg):
            tr(k=k, F=0.5 * fsq, step_norm=hn, mu=mu, ratio=None, accepted=False)
            termination = "x_tol"
            break
        x_new = _project(x + h, box)
        step = x_new - x
        lin = f + j @ step
        pred = 0.5 * (fsq - float(lin @ lin))
        f_new = np.asarray(fun(x_new), dtype=float)
        fsq_new = float(f_new @ f_new)
        ratio = 0.5 * (fsq - fsq_new) / pred if pred > 0 else -1.0
        accepted = ratio > 0 and fsq_new < fsq
        tr(k=k, F=0.5 * fsq_new if accepted else 0.5 * fsq, step_norm=hn, mu=mu, ratio=ratio,
           accepted=accepted)
        if accepted:
            x, f, fsq = x_new, f_new, fsq_new
            j = np.atleast_2d(jac(x))
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3)
            if fsq < cfg.f_tol:
                termination = "f_tol"
                break
            if _x_small(float(np.linalg.norm(step)), x, cfg):
                termination = "x_tol"
                break
        else:
            mu *= 2.0
    return SolveReport(x, 0.5 * fsq, k, termination, tr.records)


def _solve_plain(step_fn, fun, jac, x0, cfg, box, trace):
    """Undamped iteration ``x <- x + alpha * h`` shared by Newton and Gauss-Newton."""
    tr = _Tracer(trace)
    x = _project(np.array(x0, dtype=float), box)
    f = np.asarray(fun(x), dtype=float)
    fsq = float(f @ f)
    if fsq < cfg.f_tol:
        return SolveReport(x, 0.5 * fsq, 0, "f_tol", tr.records)
    termination = "max_iters"
    k = 0
    while k < cfg.max_iters:
        k += 1
        h = cfg.gn_step_alpha * step_fn(np.atleast_2d(jac(x)), f)
        x_new = _project(x + h, box)
        hn = float(np.linalg.norm(x_new - x))
        x = x_new
        f = np.asarray(fun(x), dtype=float)
        fsq = float(f @ f)
        tr(k=k, F=0.5 * fsq, step_norm=hn, ratio=None)
        if not np.isfinite(fsq):
            break
        if fsq < cfg.f_tol:
            termination = "f_tol"
            break
        if _x_small(hn, x, cfg):
            termination = "x_tol"
            break
    return SolveReport(x, 0.5 * fsq, k, termination, tr.records)


def _newton_from_values(j, f):
    h, rank = lstsq(j, -f)
    if rank < min(j.shape):
        warnings.warn("Newton system is rank deficient", RankDeficientWarning, stacklevel=3)
    return h


def solve_newton(fun, jac, x0, cfg: SolverConfig = SolverConfig(), box=None, trace=None):
    return _solve_plain(_newton_from_values, fun, jac, x0, cfg, box, trace)


def solve_gauss_newton(fun, jac, x0, cfg: SolverConfig = SolverConfig(), box=None, trace=None):
    return _solve_plain(gauss_newton_step, fun, jac, x0, cfg, box, trace)


def solve(fun, jac, x0, cfg: SolverConfig = SolverConfig(), box=None, trace=None) -> SolveReport:
    """Dispatch on ``cfg.method``."""
    from .trust_region import trust_region_solve

    if cfg.method == "lm":
        return solve_lm(fun, jac, x0, cfg, box, trace)
    if cfg.method == "trust_region":
        return trust_region_solve(fun, jac, x0, cfg, box, trace)
    if cfg.method == "newton":
        return solve_newton(fun, jac, x0, cfg, box, trace)
    return solve_gauss_newton(fun, jac, x0, cfg, box, trace)
