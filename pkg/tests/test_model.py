import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression

from berncert.datasets import blobs
from berncert.errors import DomainError
from berncert.model import (AdversarialConfig, Layer, MlpModel, TrainConfig, accuracy, init_mlp,
                            normalize_weights, power_iteration, spectral_norm, train_toy)


# --- spectral norm --------------------------------------------------------------

def test_spectral_norm_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.diag([2.0, 1.0]), iters=50) == pytest.approx(2.0, abs=1e-8)


def test_spectral_norm_zero_matrix():
    with pytest.raises(DomainError):
        spectral_norm(np.zeros((3, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3))
def test_spectral_norm_homogeneous_and_matches_svd(seed, c):
    w = np.random.default_rng(seed).normal(size=(5, 4))
    exact = np.linalg.svd(w, compute_uv=False)[0]
    est = spectral_norm(w, iters=500)
    assert est == pytest.approx(exact, rel=1e-6)
    assert spectral_norm(c * w, iters=500) == pytest.approx(abs(c) * est, rel=1e-9)


def test_spectral_norm_non_decreasing_in_iters():
    w = np.random.default_rng(7).normal(size=(6, 6))
    ests = [spectral_norm(w, iters=i) for i in (1, 2, 4, 8, 16, 64, 256)]
    assert all(b >= a - 1e-12 for a, b in zip(ests, ests[1:]))
    assert ests[-1] <= np.linalg.svd(w, compute_uv=False)[0] + 1e-12


def test_power_iteration_warm_start():
    w = np.random.default_rng(1).normal(size=(4, 3))
    sigma, u, v = power_iteration(w, 200)
    assert u @ w @ v == pytest.approx(sigma, rel=1e-12)
    again, _, _ = power_iteration(w, 1, v)
    assert again == pytest.approx(sigma, rel=1e-12)


# --- model structure -------------------------------------------------------------

def test_golden_logits(toy_model):
    # values from a plain-Python forward pass over tests/fixtures/toy_model.json
    np.testing.assert_allclose(toy_model.logits(np.array([0.5, 0.5])), [-0.15, -0.2, 0.8], atol=1e-15)
    np.testing.assert_allclose(toy_model(np.array([1.0, -0.5, 2.0])),
                               [0.0821120956560423, -0.3437158563153267, 0.8387813057915587], rtol=1e-14)
    np.testing.assert_allclose(toy_model.features(np.array([1.0, -0.5, 2.0])),
                               [0.610639233949222, 0.46692337763389535], rtol=1e-14)
    assert toy_model.predict(np.array([1.0, -0.5, 2.0])) == 2


def test_model_properties(toy_model):
    assert (toy_model.input_dim, toy_model.d, toy_model.k) == (3, 2, 3)
    assert len(toy_model.feature_layers) == 2 and len(toy_model.head_layers) == 1


def test_zero_input_gives_half_features():
    m = init_mlp(4, 3, d=3, seed=2)
    np.testing.assert_array_equal(m.features(np.zeros(4)), [0.5, 0.5, 0.5])


def test_identity_head_returns_features():
    layers = (Layer(np.eye(2), np.zeros(2), "sigmoid"), Layer(np.eye(2), np.zeros(2), "id"))
    m = MlpModel(layers, 1)
    x = np.array([0.3, 0.8])
    np.testing.assert_array_equal(m.logits(x), x)


def test_argmax_shift_invariance(toy_model):
    last = toy_model.layers[-1]
    shifted = MlpModel(toy_model.layers[:-1] + (Layer(last.w, last.b + 3.7, last.act),), toy_model.head_index)
    pts = np.random.default_rng(0).normal(size=(50, 3))
    np.testing.assert_array_equal(shifted.predict(pts), toy_model.predict(pts))


def test_last_feature_layer_must_be_sigmoid():
    layers = (Layer(np.eye(2), np.zeros(2), "relu"), Layer(np.eye(2), np.zeros(2), "id"))
    with pytest.raises(DomainError):
        MlpModel(layers, 1)


def test_shape_mismatch(toy_model):
    with pytest.raises(DomainError):
        toy_model.features(np.zeros(4))
    with pytest.raises(DomainError):
        toy_model.logits(np.zeros(3))


def test_json_round_trip(toy_model):
    text = toy_model.to_json()
    obj = json.loads(text)
    assert set(obj) == {"layers", "head_index", "d", "k"}
    assert {l["act"] for l in obj["layers"]} <= {"relu", "sigmoid", "id"}
    back = MlpModel.from_json(text)
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert back(x).tobytes() == toy_model(x).tobytes()


def test_forward_is_pure(toy_model):
    x = np.random.default_rng(0).normal(size=(5, 3))
    before = [l.w.copy() for l in toy_model.layers]
    a, b = toy_model(x), toy_model(x)
    assert a.tobytes() == b.tobytes()
    for w, l in zip(before, toy_model.layers):
        np.testing.assert_array_equal(w, l.w)


def test_jacobians_match_finite_differences(toy_model):
    h = 1e-6
    x = np.array([0.4, -0.3, 1.1])
    fd = np.stack([(toy_model(x + h * e) - toy_model(x - h * e)) / (2 * h) for e in np.eye(3)], 1)
    np.testing.assert_allclose(toy_model.jacobian(x), fd, atol=1e-8)
    z = np.array([0.3, 0.6])
    fd = np.stack([(toy_model.logits(z + h * e) - toy_model.logits(z - h * e)) / (2 * h) for e in np.eye(2)], 1)
    np.testing.assert_allclose(toy_model.head_jacobian(z), fd, atol=1e-8)


# --- normalization ---------------------------------------------------------------

def test_normalize_weights_examples():
    m = MlpModel((Layer(np.diag([4.0, 4.0]), np.array([0.3, -1.0]), "sigmoid"),
                  Layer(np.eye(2), np.zeros(2), "id")), 1)
    out = normalize_weights(m)
    np.testing.assert_allclose(out.layers[0].w, np.eye(2), atol=1e-12)
    np.testing.assert_array_equal(out.layers[0].b, [0.3, -1.0])
    np.testing.assert_array_equal(out.layers[1].w, np.eye(2))  # head untouched


def test_normalize_is_idempotent(toy_model):
    once = normalize_weights(toy_model)
    twice = normalize_weights(once)
    for a, b in zip(once.layers, twice.layers):
        np.testing.assert_allclose(a.w, b.w, atol=1e-6)
    for layer in once.feature_layers:
        assert np.linalg.svd(layer.w, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-6)


def test_normalized_features_are_one_lipschitz(toy_model):
    m = normalize_weights(toy_model)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2000, 3)) * 3, rng.normal(size=(2000, 3)) * 3
    ratio = np.linalg.norm(m.features(a) - m.features(b), axis=1) / np.linalg.norm(a - b, axis=1)
    assert ratio.max() <= 1 + 1e-6


# --- training --------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(learning_rate=0)
    with pytest.raises(DomainError):
        TrainConfig(batch_size=0)
    with pytest.raises(DomainError):
        AdversarialConfig(epsilon=-1)


def test_blobs_separable_by_logistic_oracle_and_trained():
    x, y = blobs(200, seed=0)
    assert LogisticRegression().fit(x, y).score(x, y) >= 0.99
    m = train_toy(x, y, TrainConfig(epochs=100), seed=0)
    assert accuracy(m, x, y) >= 0.99


def test_moons_train_accuracy(moons_model, moons_data):
    (x, y), _ = moons_data
    assert accuracy(moons_model, x, y) >= 0.95
    for layer in moons_model.feature_layers:
        assert np.linalg.svd(layer.w, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-6)
    f = moons_model.features(x)
    assert np.all((f > 0) & (f < 1))


def test_epochs_zero_returns_initialized_model():
    x, y = blobs(200, seed=0)
    m = train_toy(x, y, TrainConfig(epochs=0), seed=4)
    init = normalize_weights(init_mlp(2, 2, seed=4))
    for a, b in zip(m.layers, init.layers):
        np.testing.assert_allclose(a.w, b.w, atol=1e-12)
    assert 0.0 <= accuracy(m, x, y) <= 1.0


def test_training_is_seeded():
    x, y = blobs(100, seed=1)
    cfg = TrainConfig(epochs=5)
    a, b = train_toy(x, y, cfg, seed=3), train_toy(x, y, cfg, seed=3)
    assert a.to_json() == b.to_json()


def test_invalid_labels():
    x = np.zeros((4, 2))
    with pytest.raises(DomainError):
        train_toy(x, np.array([0, 1, 2, -1]))
    with pytest.raises(DomainError):
        train_toy(x, np.array([0, 1, 2, 3]), num_classes=3)
    with pytest.raises(DomainError):
        train_toy(x, np.array([0, 0.5, 1, 1]))


def test_adversarial_training_runs():
    x, y = blobs(100, seed=0)
    cfg = TrainConfig(epochs=20, adversarial=AdversarialConfig(steps=3, epsilon=0.1))
    m = train_toy(x, y, cfg, seed=0)
    assert accuracy(m, x, y) >= 0.95
