"""Bernstein polynomials of black-box functions on the unit cube.

A :class:`BernsteinSmoother` stores samples ``f(k/n)`` of a vector-valued
function on the uniform grid ``{0, 1/n, ..., 1}^d`` and evaluates

    B_n(f; x) = sum_k f(k/n) * prod_j C(n, k_j) x_j^k_j (1 - x_j)^(n - k_j)

together with its gradient. The coefficient table is row-major with
dimension 0 varying slowest, so grid row ``r`` corresponds to the
base-(n+1) digits of ``r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError, GridTooLargeError

# Above this degree the basis is evaluated in log space.
LOG_SPACE_DEGREE = 30
DEFAULT_MAX_GRID = 10**7


def _check_unit(x, what="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError(f"{what} must lie in [0, 1], got {x!r}")
    return x


def bernstein_basis(n: int, k: int, x: float) -> float:
    """Return the basis weight ``C(n, k) x^k (1 - x)^(n - k)``.

    Uses the convention ``0**0 == 1`` so that the endpoint weights are exact.
    """
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    x = float(_check_unit(x))
    if n <= LOG_SPACE_DEGREE:
        return math.comb(n, k) * x**k * (1.0 - x) ** (n - k)
    if x == 0.0:
        return 1.0 if k == 0 else 0.0
    if x == 1.0:
        return 1.0 if k == n else 0.0
    log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(log_c + k * math.log(x) + (n - k) * math.log1p(-x))


def basis_matrix(n: int, x) -> np.ndarray:
    """All ``n + 1`` basis weights at each entry of ``x``.

    Returns an array of shape ``x.shape + (n + 1,)``. No domain check.
    """
    x = np.asarray(x, dtype=float)[..., None]
    k = np.arange(n + 1)
    if n <= LOG_SPACE_DEGREE:
        coeff = np.array([math.comb(n, i) for i in range(n + 1)], dtype=float)
        return coeff * np.power(x, k) * np.power(1.0 - x, n - k)
    log_c = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    with np.errstate(divide="ignore"):
        return np.exp(log_c + xlogy(k, x) + xlog1py(n - k, -x))


def basis_derivative_matrix(n: int, x) -> np.ndarray:
    """Derivatives of the ``n + 1`` basis polynomials, shape ``x.shape + (n + 1,)``.

    d/dx b_k^n = n (b_{k-1}^{n-1} - b_k^{n-1}) with out-of-range terms zero.
    """
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.zeros(x.shape + (1,))
    lower = basis_matrix(n - 1, x)
    pad = np.zeros(x.shape + (1,))
    return n * (np.concatenate([pad, lower], axis=-1) - np.concatenate([lower, pad], axis=-1))


def eval_1d(samples, x):
    """Evaluate the 1-D Bernstein polynomial with ``samples[k] = f(k/n)``.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size == 0:
        raise DomainError("samples must be a non-empty 1-D sequence")
    x = _check_unit(x)
    return basis_matrix(samples.size - 1, x) @ samples


def grid_points(n: int, d: int) -> np.ndarray:
    """The ``(n+1)^d`` grid nodes ``k/n`` in row-major order, dimension 0 slowest."""
    axes = np.indices((n + 1,) * d).reshape(d, -1).T
    return axes / n


def _contract(table, factors):
    """Contract ``table`` of shape ((n+1),)*d + (K,) against per-dimension factors.

    ``factors`` is a list of d arrays of shape (N, n+1); returns (N, K).
    """
    n_pts = factors[0].shape[0]
    out = factors[0] @ table.reshape(table.shape[0], -1)
    for f in factors[1:]:
        out = out.reshape(n_pts, f.shape[1], -1)
        out = np.einsum("pk,pkr->pr", f, out)
    return out


@dataclass(frozen=True)
class BernsteinSmoother:
    """Bernstein polynomial of a classifier ``[0,1]^d -> R^K`` with uniform degree ``n``.

    ``coeffs`` has shape ``((n+1)**d, num_classes)`` and holds the samples
    ``f(k/n)``; it is made read-only on construction.
    """

    n: int
    dim: int
    num_classes: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if self.n < 1 or self.dim < 1 or self.num_classes < 1:
            raise DomainError("n, dim and num_classes must be positive")
        expected = ((self.n + 1) ** self.dim, self.num_classes)
        if coeffs.shape != expected:
            raise DomainError(f"coeffs must have shape {expected}, got {coeffs.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def table(self) -> np.ndarray:
        return self.coeffs.reshape((self.n + 1,) * self.dim + (self.num_classes,))

    def _points(self, x):
        x = _check_unit(x)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise DomainError(f"expected points of dimension {self.dim}, got {x.shape[1]}")
        return x, single

    def __call__(self, x) -> np.ndarray:
        """Smoothed logits at a point ``(d,)`` -> ``(K,)`` or a batch ``(N, d)`` -> ``(N, K)``."""
        x, single = self._points(x)
        factors = [basis_matrix(self.n, x[:, j]) for j in range(self.dim)]
        out = _contract(self.table, factors)
        return out[0] if single else out

    def gradient(self, x) -> np.ndarray:
        """Jacobian of the smoothed logits, ``(K, d)`` for one point or ``(N, K, d)``."""
        x, single = self._points(x)
        vals = [basis_matrix(self.n, x[:, j]) for j in range(self.dim)]
        ders = [basis_derivative_matrix(self.n, x[:, j]) for j in range(self.dim)]
        cols = []
        for j in range(self.dim):
            factors = vals[:j] + [ders[j]] + vals[j + 1:]
            cols.append(_contract(self.table, factors))
        out = np.stack(cols, axis=-1)
        return out[0] if single else out

    def predict(self, x):
        return np.argmax(self(x), axis=-1)

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "d": self.dim, "k": self.num_classes, "coeffs": self.coeffs.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "BernsteinSmoother":
        obj = json.loads(text)
        n, d, k = int(obj["n"]), int(obj["d"]), int(obj["k"])
        coeffs = np.asarray(obj["coeffs"], dtype=float)
        if coeffs.size != (n + 1) ** d * k:
            raise DomainError("coeffs length does not match (n+1)^d * k")
        return cls(n, d, k, coeffs.reshape(-1, k))


def precompute_grid(
    f: Callable[[np.ndarray], np.ndarray], n: int, d: int, max_grid: int = DEFAULT_MAX_GRID
) -> BernsteinSmoother:
    """Sample ``f`` on the uniform ``(n+1)^d`` grid and build a smoother.

    ``f`` receives all grid points at once as an ``(N, d)`` array and must
    return ``(N, K)`` (or ``(N,)`` for a scalar function).
    """
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rows = (n + 1) ** d
    if rows > max_grid:
        raise GridTooLargeError(f"(n+1)^d = {rows} grid points exceeds the cap of {max_grid}")
    values = np.asarray(f(grid_points(n, d)), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != rows:
        raise DomainError(f"f returned {values.shape[0]} rows for {rows} grid points")
    return BernsteinSmoother(n, d, values.shape[1], values)


def eval_multi(s: BernsteinSmoother, x) -> np.ndarray:
    return s(x)


def grad_multi(s: BernsteinSmoother, x) -> np.ndarray:
    return s.gradient(x)
