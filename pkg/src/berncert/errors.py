"""Exception types shared across the package."""

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class GridTooLargeError(MemoryError):
    """The (n+1)^d coefficient grid would exceed the configured cap."""


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system required to be nonsingular is rank deficient."""


class ConstraintError(ValueError):
    """Structural constraint between components violated (e.g. d > K)."""


class RankDeficientWarning(RuntimeWarning):
    """Emitted when a least-squares solve falls back to a minimum-norm solution."""
