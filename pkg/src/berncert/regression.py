"""Post-hoc Bernstein smoothing of an over-fitted 1-D regressor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bernstein import eval_1d
from .errors import DomainError
from .model import Layer, _backward, _forward_cache, _run


@dataclass(frozen=True)
class Regressor:
    layers: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _run(self.layers, x.reshape(-1, 1)).reshape(x.shape)


def fit_regressor(x, y, hidden=(64, 64), epochs=10000, learning_rate=0.01, seed=0) -> Regressor:
    """Full-batch Adam on mean squared error; meant to over-fit small noisy data."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise DomainError("need matching, non-empty x and y")
    rng = np.random.default_rng(seed)
    widths = [1, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["id"]
    ws = [rng.uniform(-1, 1, (o, i)) * np.sqrt(6.0 / i) for i, o in zip(widths, widths[1:])]
    bs = [rng.uniform(-1.0, 1.0, o) for o in widths[1:]]
    params = ws + bs
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, epochs + 1):
        pre, post = _forward_cache(ws, bs, acts, x)
        g_out = 2.0 * (post[-1] - y) / x.shape[0]
        gw, gb, _ = _backward(ws, acts, pre, post, g_out)
        for i, g in enumerate(gw + gb):
            m1[i] = b1 * m1[i] + (1 - b1) * g
            m2[i] = b2 * m2[i] + (1 - b2) * g * g
            step = learning_rate * (m1[i] / (1 - b1**t)) / (np.sqrt(m2[i] / (1 - b2**t)) + eps)
            params[i] -= step
    return Regressor(tuple(Layer(w, b, a) for w, b, a in zip(ws, bs, acts)))


def bernstein_smooth_1d(f, n: int, x):
    """``B_n(f; x)`` for a callable ``f`` on [0, 1]."""
    if n < 1:
        raise DomainError("n must be >= 1")
    samples = np.asarray(f(np.arange(n + 1) / n), dtype=float)
    return eval_1d(samples, x)


def total_variation(values) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))


def smoothed_curve(f, n: int, points=1001):
    """Dense grid, base predictions and Bernstein-smoothed predictions."""
    grid = np.linspace(0.0, 1.0, points)
    return grid, np.asarray(f(grid), dtype=float), bernstein_smooth_1d(f, n, grid)
