"""Trust-region driver with dogleg (l2 ball) and dogbox (l-inf box) subproblems."""

from __future__ import annotations

import math

import numpy as np

from .core import SolveReport, SolverConfig, _Tracer, _x_small
from .linalg import lstsq

DELTA_FLOOR = 1e-16


def dogleg_step(j, f, delta):
    """Powell's dogleg step for ``min ||f + J s||`` subject to ``||s||_2 <= delta``."""
    g = j.T @ f
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros(j.shape[1])
    h_gn = lstsq(j, -f)[0]
    if np.linalg.norm(h_gn) <= delta:
        return h_gn
    jg = j @ g
    alpha = gn**2 / float(jg @ jg)
    h_sd = -alpha * g
    if alpha * gn >= delta:
        return -(delta / gn) * g
    # ||h_sd + t (h_gn - h_sd)|| = delta, t in [0, 1]
    d = h_gn - h_sd
    a = float(d @ d)
    b = 2.0 * float(h_sd @ d)
    c = float(h_sd @ h_sd) - delta**2
    t = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    return h_sd + min(max(t, 0.0), 1.0) * d


def _max_fraction(s, lo, hi):
    """Largest t in [0, 1] keeping ``t * s`` inside ``[lo, hi]`` (lo <= 0 <= hi)."""
    t = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(s > 0, hi / s, np.inf)
        dn = np.where(s < 0, lo / s, np.inf)
    return float(min(t, np.min(up), np.min(dn)))


def dogbox_step(j, f, delta, x=None, bounds=None):
    """Dogleg restricted to the box ``|s_i| <= delta`` intersected with the bounds.

    Variables sitting on a bound with the gradient pushing outward are frozen.
    """
    n = j.shape[1]
    lo = np.full(n, -delta)
    hi = np.full(n, delta)
    g = j.T @ f
    free = np.ones(n, dtype=bool)
    if bounds is not None:
        lo = np.maximum(lo, bounds[0] - x)
        hi = np.minimum(hi, bounds[1] - x)
        free &= ~((lo >= 0) & (g > 0)) & ~((hi <= 0) & (g < 0))
        lo = np.minimum(lo, 0.0)
        hi = np.maximum(hi, 0.0)
    s = np.zeros(n)
    jf, gf, lof, hif = j[:, free], g[free], lo[free], hi[free]
    gn = float(np.linalg.norm(gf))
    if gn == 0.0:
        return s
    h_gn = lstsq(jf, -f)[0]
    if np.all(h_gn >= lof) and np.all(h_gn <= hif):
        s[free] = h_gn
        return s
    jg = jf @ gf
    h_sd = -(gn**2 / float(jg @ jg)) * gf
    t = _max_fraction(h_sd, lof, hif)
    if t < 1.0:
        s[free] = t * h_sd
        return s
    d = h_gn - h_sd
    # largest tau with h_sd + tau d inside the box
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(d > 0, (hif - h_sd) / d, np.inf)
        dn = np.where(d < 0, (lof - h_sd) / d, np.inf)
    tau = float(min(1.0, np.min(up), np.min(dn)))
    s[free] = np.clip(h_sd + max(tau, 0.0) * d, lof, hif)
    return s


def trust_region_solve(fun, jac, x0, cfg: SolverConfig = SolverConfig(), bounds=None,
                       trace=None) -> SolveReport:
    """Basic trust-region iteration on ``F = 0.5 ||phi||^2``.

    r < 1/4 shrinks the radius fourfold; r > 3/4 with a step on the region
    boundary doubles it up to ``tr_delta_max``; the step is taken when
    ``r > tr_eta``. With ``subproblem_norm == inf`` the region is a box and
    ``bounds`` are honoured by the dogbox step; for the l2 dogleg, a step
    leaving the bounds is cut back along its own direction.
    """
    tr = _Tracer(trace)
    p = cfg.subproblem_norm
    x = np.array(x0, dtype=float)
    if bounds is not None:
        bounds = (np.broadcast_to(np.asarray(bounds[0], float), x.shape),
                  np.broadcast_to(np.asarray(bounds[1], float), x.shape))
        x = np.clip(x, *bounds)
    f = np.asarray(fun(x), dtype=float)
    j = np.atleast_2d(jac(x))
    fsq = float(f @ f)
    if fsq < cfg.f_tol:
        return SolveReport(x, 0.5 * fsq, 0, "f_tol", tr.records)
    delta = cfg.tr_delta0
    termination = "max_iters"
    k = 0
    while k < cfg.max_iters:
        k += 1
        if p == 2:
            s = dogleg_step(j, f, delta)
            if bounds is not None:
                s = _max_fraction(s, bounds[0] - x, bounds[1] - x) * s
        else:
            s = dogbox_step(j, f, delta, x, bounds)
        snorm = float(np.linalg.norm(s, ord=p))
        lin = f + j @ s
        pred = 0.5 * (fsq - float(lin @ lin))
        if pred <= 0.0:
            # zero gradient on the free variables: stationary point
            tr(k=k, F=0.5 * fsq, step_norm=snorm, delta=delta, ratio=None, pred=max(pred, 0.0),
               accepted=False)
            termination = "x_tol"
            break
        f_new = np.asarray(fun(x + s), dtype=float)
        fsq_new = float(f_new @ f_new)
        ratio = 0.5 * (fsq - fsq_new) / pred
        on_edge = snorm >= delta * (1.0 - 1e-12)
        accepted = ratio > cfg.tr_eta
        tr(k=k, F=0.5 * (fsq_new if accepted else fsq), step_norm=snorm, delta=delta, ratio=ratio,
           pred=pred, accepted=accepted)
        if ratio < 0.25:
            delta = 0.25 * delta
        elif ratio > 0.75 and on_edge:
            delta = min(2.0 * delta, cfg.tr_delta_max)
        if accepted:
            x = x + s
            if bounds is not None:
                x = np.clip(x, *bounds)
            f, fsq = f_new, fsq_new
            j = np.atleast_2d(jac(x))
            if fsq < cfg.f_tol:
                termination = "f_tol"
                break
        if _x_small(snorm, x, cfg):
            termination = "x_tol"
            break
        if delta < DELTA_FLOOR:
            termination = "trust_radius_collapse"
            break
    return SolveReport(x, 0.5 * fsq, k, termination, tr.records)
