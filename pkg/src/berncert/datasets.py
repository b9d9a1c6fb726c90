"""Toy datasets and the labeled-CSV format used by the command line."""

import csv
from pathlib import Path

import numpy as np
from sklearn.datasets import make_blobs, make_moons


def two_moons(n=500, noise=0.1, seed=0, scale=2.0):
    """Two interleaving half circles, centred and scaled by ``scale``."""
    x, y = make_moons(n_samples=n, noise=noise, random_state=seed)
    x = (x - np.array([0.5, 0.25])) * scale
    return x, y.astype(int)


def blobs(n=200, seed=0, separation=4.0):
    """Two isotropic Gaussian blobs ``separation`` apart."""
    centers = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])
    x, y = make_blobs(n_samples=n, centers=centers, cluster_std=0.5, random_state=seed)
    return x, y.astype(int)


def wiggly_regression(n=40, noise=0.15, seed=0, outliers=4):
    """Noisy samples of a smooth curve on [0, 1] with a few gross outliers."""
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    y = np.sin(2 * np.pi * x) + noise * rng.standard_normal(n)
    hit = rng.choice(n, size=outliers, replace=False)
    y[hit] += rng.choice([-1.0, 1.0], size=outliers) * 1.5
    return x, y


def write_labeled_csv(path, x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{i + 1}" for i in range(x.shape[1])] + ["label"])
        for row, label in zip(x, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_labeled_csv(path):
    """Read ``x_1..x_m,label`` rows. Raises ``ValueError`` on malformed content."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file (a header row is required)")
    header = rows[0]
    if len(header) < 2 or header[-1].strip() != "label":
        raise ValueError(f"{path}: header must be x_1..x_m,label")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    data = np.array([[float(v) for v in r] for r in body])
    labels = data[:, -1]
    if np.any(labels != np.round(labels)):
        raise ValueError(f"{path}: labels must be integers")
    return data[:, :-1], labels.astype(int)


def write_xy_csv(path, x, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for a, b in zip(x, y):
            w.writerow([repr(float(a)), repr(float(b))])


def read_xy_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2 or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ValueError(f"{path}: expected header x,y and at least one row")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, 0], data[:, 1]
