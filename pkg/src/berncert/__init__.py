"""Deterministic certified radii for Bernstein-smoothed classifiers."""

from .bernstein import BernsteinSmoother, eval_1d, eval_multi, grad_multi, precompute_grid
from .boundary import BoundarySystem, conservative_xi, rank_map, softmax
from .certify import (CertResult, certified_curve, certify, certify_2d, certify_point,
                      predict_smoothed, ball_sampling_check, smoother_for)
from .model import MlpModel, TrainConfig, normalize_weights, spectral_norm, train_toy
from .solvers import SolveReport, SolverConfig

__version__ = "0.1.0"

__all__ = [
    "BernsteinSmoother", "BoundarySystem", "CertResult", "MlpModel", "SolveReport", "SolverConfig",
    "TrainConfig", "certified_curve", "certify", "certify_2d", "certify_point", "conservative_xi",
    "eval_1d", "eval_multi", "grad_multi", "normalize_weights", "precompute_grid", "predict_smoothed",
    "ball_sampling_check", "rank_map", "smoother_for", "softmax", "spectral_norm", "train_toy",
]
