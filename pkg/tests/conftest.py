from pathlib import Path

import numpy as np
import pytest

from berncert.bernstein import precompute_grid
from berncert.datasets import two_moons
from berncert.model import MlpModel, TrainConfig, train_toy

FIXTURES = Path(__file__).parent / "fixtures"


def linear_smoother(t=0.5, n=3, d=2):
    """Two-class smoother whose boundary is the hyperplane x_1 = t.

    The logits (x_1 - t, t - x_1) are affine, so any degree reproduces them exactly.
    """
    return precompute_grid(lambda x: np.c_[x[:, 0] - t, t - x[:, 0]], n, d)


@pytest.fixture
def toy_model():
    return MlpModel.from_json((FIXTURES / "toy_model.json").read_text())


@pytest.fixture(scope="session")
def moons_data():
    return two_moons(500, seed=0), two_moons(200, seed=1)


@pytest.fixture(scope="session")
def moons_model(moons_data):
    (x, y), _ = moons_data
    return train_toy(x, y, TrainConfig(epochs=300, learning_rate=0.1), d=2, seed=0)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
