"""FGSM and PGD against base or smoothed classifiers.

An attack target exposes ``logits(x)``, ``jacobian(x)`` (K x dim at one
point) and ``bounds`` (a ``(lo, hi)`` pair or None for an unbounded domain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import DomainError


class SmoothedTarget:
    """Bernstein-smoothed classifier acting on feature points in [0,1]^d."""

    bounds = (0.0, 1.0)

    def __init__(self, smoother):
        self.smoother = smoother

    def logits(self, x):
        return self.smoother(x)

    def jacobian(self, x):
        return self.smoother.gradient(x)


class HeadTarget:
    """Unsmoothed classifier head on feature points in [0,1]^d."""

    bounds = (0.0, 1.0)

    def __init__(self, model):
        self.model = model

    def logits(self, x):
        return self.model.logits(x)

    def jacobian(self, x):
        return self.model.head_jacobian(x)


class InputTarget:
    """Full model on raw inputs, optionally with the smoothed head."""

    def __init__(self, model, smoother=None, bounds=None):
        self.model = model
        self.smoother = smoother
        self.bounds = bounds

    def logits(self, x):
        if self.smoother is None:
            return self.model(x)
        return self.smoother(np.clip(self.model.features(x), 0.0, 1.0))

    def jacobian(self, x):
        if self.smoother is None:
            return self.model.jacobian(x)
        feats = np.clip(self.model.features(x), 0.0, 1.0)
        return self.smoother.gradient(feats) @ self.model.feature_jacobian(x)


@dataclass(frozen=True)
class AttackConfig:
    norm: float = 2
    epsilon: float = 0.1
    steps: int = 20
    step_size: Optional[float] = None  # default 2.5 * epsilon / steps
    space: str = "feature"

    def __post_init__(self):
        if self.norm not in (2, math.inf):
            raise DomainError("attack norm must be 2 or inf")
        if self.epsilon < 0 or self.steps < 1:
            raise DomainError("need epsilon >= 0 and steps >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise DomainError("step_size must be positive")
        if self.space not in ("input", "feature"):
            raise DomainError("space must be 'input' or 'feature'")

    @property
    def alpha(self) -> float:
        return self.step_size if self.step_size is not None else 2.5 * self.epsilon / self.steps


def loss_and_grad(target, x, label):
    """Cross-entropy of the target's logits at ``x`` and its gradient w.r.t. ``x``."""
    z = target.logits(x)
    loss = -float(log_softmax(z)[label])
    g = softmax(z)
    g[label] -= 1.0
    return loss, target.jacobian(x).T @ g


def _ascent_direction(g, norm):
    if norm == math.inf:
        return np.sign(g)
    return g / np.linalg.norm(g)


def _clip(x, bounds):
    return x if bounds is None else np.clip(x, bounds[0], bounds[1])


def project_ball(x, center, eps, norm):
    """Project onto the ``eps``-ball around ``center``."""
    delta = x - center
    if norm == math.inf:
        return center + np.clip(delta, -eps, eps)
    size = np.linalg.norm(delta)
    return x if size <= eps else center + delta * (eps / size)


def fgsm(target, x, label, epsilon, norm=math.inf):
    """One signed (l-inf) or normalized (l2) gradient step of size ``epsilon``.

    Returns ``(x_adv, zero_gradient)``; at a zero gradient ``x`` is returned unchanged.
    """
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    x = np.asarray(x, dtype=float)
    _, g = loss_and_grad(target, x, label)
    if not np.any(g):
        return x.copy(), True
    return _clip(x + epsilon * _ascent_direction(g, norm), target.bounds), False


def pgd(target, x, label, cfg: AttackConfig, *, stop_on_flip=False, callback=None):
    """Projected gradient ascent on cross-entropy inside the eps-ball and the domain.

    With ``stop_on_flip`` the first iterate whose prediction differs from
    ``label`` is returned. ``callback`` receives every iterate.
    Returns ``(x_adv, zero_gradient)``.
    """
    x0 = np.asarray(x, dtype=float)
    xk = x0.copy()
    for _ in range(cfg.steps):
        _, g = loss_and_grad(target, xk, label)
        if not np.any(g):
            return xk, True
        xk = xk + cfg.alpha * _ascent_direction(g, cfg.norm)
        xk = _clip(project_ball(xk, x0, cfg.epsilon, cfg.norm), target.bounds)
        if callback is not None:
            callback(xk)
        if stop_on_flip and int(np.argmax(target.logits(xk))) != label:
            break
    return xk, False


def pgd_batch(loss_grad, xb, epsilon, steps, step_size, norm, bounds=None):
    """Row-wise PGD on a batch; ``loss_grad(x)`` returns the input gradient of the loss."""
    x0 = np.asarray(xb, dtype=float)
    xk = x0.copy()
    for _ in range(steps):
        g = loss_grad(xk)
        if norm == math.inf:
            step = np.sign(g)
        else:
            size = np.linalg.norm(g, axis=1, keepdims=True)
            step = np.divide(g, size, out=np.zeros_like(g), where=size > 0)
        xk = xk + step_size * step
        delta = xk - x0
        if norm == math.inf:
            delta = np.clip(delta, -epsilon, epsilon)
        else:
            size = np.linalg.norm(delta, axis=1, keepdims=True)
            delta = delta * np.minimum(1.0, epsilon / np.maximum(size, 1e-300))
        xk = _clip(x0 + delta, bounds)
    return xk


def empirical_min_perturbation(target, x0, label, norm, budgets, steps=20, step_size=None):
    """Smallest budget at which PGD flips the prediction, or None.

    Returns 0 when ``x0`` is already misclassified.
    """
    budgets = [float(b) for b in budgets]
    if any(b < a for a, b in zip(budgets, budgets[1:])):
        raise DomainError("budgets must be ascending")
    x0 = np.asarray(x0, dtype=float)
    if int(np.argmax(target.logits(x0))) != label:
        return 0.0
    for eps in budgets:
        if eps == 0:
            continue
        cfg = AttackConfig(norm=norm, epsilon=eps, steps=steps, step_size=step_size)
        adv, _ = pgd(target, x0, label, cfg, stop_on_flip=True)
        if int(np.argmax(target.logits(adv))) != label:
            return eps
    return None
