"""Residual systems whose roots lie on the smoothed decision boundary.

For smoothed logits ``beta(x)`` and the rank map ``rho`` fixed at an anchor
point, the residuals are

    phi_0 = beta[rho1] - beta[rho2] - xi
    phi_1 = S(beta)[rho1] - 1 / (1 + exp(-xi))
    phi_2 = S(beta)[rho2] - 1 / (1 + exp(xi))
    phi_i = S(beta)[rho_i]            for i = 3 .. min(d, K)

where ``S`` is the softmax and ``xi = gap / C`` is the conservative margin
(``C = inf`` gives ``xi = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .bernstein import BernsteinSmoother
from .errors import DomainError


def softmax(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if np.any(np.isnan(beta)):
        raise DomainError("softmax of NaN logits")
    z = np.exp(beta - np.max(beta, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def rank_map(beta) -> tuple:
    """Classes ordered by decreasing logit; ties go to the lower class index."""
    beta = np.asarray(beta, dtype=float)
    return tuple(int(i) for i in np.lexsort((np.arange(beta.size), -beta)))


def conservative_xi(beta, rho, c: float) -> float:
    if not c > 0:
        raise DomainError(f"C must be positive, got {c}")
    if math.isinf(c):
        return 0.0
    gap = float(beta[rho[0]] - beta[rho[1]])
    if gap < 0:
        raise DomainError("rho does not rank the top class first")
    return gap / c


@dataclass(frozen=True)
class BoundarySystem:
    """Residual map anchored at the point where ``rho`` and ``xi`` were computed."""

    smoother: BernsteinSmoother
    rho: tuple
    xi: float = 0.0
    c_param: float = math.inf

    def __post_init__(self):
        k = self.smoother.num_classes
        if k < 2:
            raise DomainError("a decision boundary needs at least two classes")
        if sorted(self.rho) != list(range(k)):
            raise DomainError("rho must be a permutation of the classes")
        if self.xi < 0:
            raise DomainError("xi must be non-negative")

    @classmethod
    def at(cls, smoother: BernsteinSmoother, x0, c: float = math.inf) -> "BoundarySystem":
        """Build the system with rank map and margin frozen at ``x0``."""
        beta = smoother(x0)
        rho = rank_map(beta)
        return cls(smoother, rho, conservative_xi(beta, rho, c), c)

    @property
    def dim(self) -> int:
        return self.smoother.dim

    @property
    def num_residuals(self) -> int:
        return min(self.dim, self.smoother.num_classes) + 1

    def _ranks(self):
        # the top two ranks are always needed for phi_0, even when d = 1
        return np.asarray(self.rho[: max(2, self.num_residuals - 1)])

    def residual(self, x) -> np.ndarray:
        beta = self.smoother(x)
        s = softmax(beta)
        r = self._ranks()
        phi = np.empty(self.num_residuals)
        phi[0] = beta[r[0]] - beta[r[1]] - self.xi
        phi[1] = s[r[0]] - expit(self.xi)
        if self.num_residuals > 2:
            phi[2] = s[r[1]] - expit(-self.xi)
            phi[3:] = s[r[2:]]
        return phi

    def jacobian(self, x) -> np.ndarray:
        beta = self.smoother(x)
        dbeta = self.smoother.gradient(x)  # (K, d)
        s = softmax(beta)
        ds = s[:, None] * (dbeta - s @ dbeta)  # dS_i/dx = S_i (dbeta_i - sum_j S_j dbeta_j)
        r = self._ranks()
        jac = np.empty((self.num_residuals, self.dim))
        jac[0] = dbeta[r[0]] - dbeta[r[1]]
        jac[1:] = ds[r[: self.num_residuals - 1]]
        return jac

    def objective(self, x) -> float:
        return objective(self.residual(x))


def objective(phi) -> float:
    """``0.5 * ||phi||^2``."""
    phi = np.asarray(phi, dtype=float)
    return 0.5 * float(phi @ phi)


def residual(sys: BoundarySystem, x) -> np.ndarray:
    return sys.residual(x)


def residual_jacobian(sys: BoundarySystem, x) -> np.ndarray:
    return sys.jacobian(x)
