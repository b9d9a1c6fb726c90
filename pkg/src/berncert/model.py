"""Spectrally normalized feed-forward classifiers.

The network is split at ``head_index``: layers before it form the feature
extractor G, which maps inputs into the open cube (0,1)^d through a final
sigmoid; the remaining layers form the classifier head. Only G is spectrally
normalized, which makes it 1-Lipschitz in the l2 norm.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .errors import DomainError

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "id")


def _activate(act, z):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid":
        return expit(z)
    return z


def _activation_slope(act, z, a):
    if act == "relu":
        return (z > 0).astype(float)
    if act == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "relu"

    def __post_init__(self):
        if self.act not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.act!r}")
        w = np.array(self.w, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        if w.shape[0] != b.shape[0]:
            raise DomainError(f"weight {w.shape} and bias {b.shape} disagree")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)


def _run(layers, x):
    for layer in layers:
        x = _activate(layer.act, x @ layer.w.T + layer.b)
    return x


def _jacobian(layers, x):
    """Jacobian of a layer stack at a single point ``x``."""
    jac = np.eye(x.shape[-1])
    for layer in layers:
        z = layer.w @ x + layer.b
        x = _activate(layer.act, z)
        jac = (_activation_slope(layer.act, z, x)[:, None] * layer.w) @ jac
    return jac


@dataclass(frozen=True)
class MlpModel:
    layers: tuple
    head_index: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not 1 <= self.head_index < len(layers):
            raise DomainError("head_index must split the layers into two non-empty parts")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.w.shape[0] != nxt.w.shape[1]:
                raise DomainError("consecutive layer shapes do not chain")
        if layers[self.head_index - 1].act != "sigmoid":
            raise DomainError("the last feature layer must use a sigmoid")

    @property
    def input_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def d(self) -> int:
        return self.layers[self.head_index].w.shape[1]

    @property
    def k(self) -> int:
        return self.layers[-1].w.shape[0]

    @property
    def feature_layers(self):
        return self.layers[: self.head_index]

    @property
    def head_layers(self):
        return self.layers[self.head_index:]

    def _check(self, x, width):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != width:
            raise DomainError(f"expected trailing dimension {width}, got shape {x.shape}")
        return x

    def features(self, inputs) -> np.ndarray:
        """G(inputs); works on a single vector or a batch of rows."""
        return _run(self.feature_layers, self._check(inputs, self.input_dim))

    def logits(self, x) -> np.ndarray:
        """Classifier head applied to feature points in [0,1]^d."""
        return _run(self.head_layers, self._check(x, self.d))

    def __call__(self, inputs) -> np.ndarray:
        return self.logits(self.features(inputs))

    def predict(self, inputs):
        return np.argmax(self(inputs), axis=-1)

    def feature_jacobian(self, inputs) -> np.ndarray:
        return _jacobian(self.feature_layers, self._check(inputs, self.input_dim))

    def head_jacobian(self, x) -> np.ndarray:
        return _jacobian(self.head_layers, self._check(x, self.d))

    def jacobian(self, inputs) -> np.ndarray:
        return _jacobian(self.layers, self._check(inputs, self.input_dim))

    def to_dict(self) -> dict:
        return {
            "layers": [{"w": l.w.tolist(), "b": l.b.tolist(), "act": l.act} for l in self.layers],
            "head_index": self.head_index,
            "d": self.d,
            "k": self.k,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "MlpModel":
        layers = [Layer(np.asarray(l["w"], dtype=float), np.asarray(l["b"], dtype=float), l["act"])
                  for l in obj["layers"]]
        model = cls(tuple(layers), int(obj["head_index"]))
        if ("d" in obj and model.d != obj["d"]) or ("k" in obj and model.k != obj["k"]):
            raise DomainError("declared d/k do not match the layer shapes")
        return model

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))


def init_mlp(input_dim, num_classes, d=2, hidden=(16, 16), head_hidden=(16,), seed=0) -> MlpModel:
    """Build a model with weights drawn uniformly in +-1/sqrt(fan_in) and zero biases."""
    rng = np.random.default_rng(seed)
    widths = [input_dim, *hidden, d, *head_hidden, num_classes]
    acts = ["relu"] * len(hidden) + ["sigmoid"] + ["relu"] * len(head_hidden) + ["id"]
    layers = []
    for fan_in, fan_out, act in zip(widths, widths[1:], acts):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(Layer(rng.uniform(-bound, bound, (fan_out, fan_in)), np.zeros(fan_out), act))
    return MlpModel(tuple(layers), head_index=len(hidden) + 1)


# --- spectral normalization -------------------------------------------------

def _start_vector(n):
    v = np.random.default_rng(12345).standard_normal(n)
    return v / np.linalg.norm(v)


def power_iteration(w, iters, v=None):
    """Power iteration on ``w^T w``. Returns ``(sigma, u, v)`` with ``sigma = u^T w v``."""
    w = np.asarray(w, dtype=float)
    if iters < 1:
        raise DomainError("iters must be >= 1")
    if not np.any(w):
        raise DomainError("spectral norm of an all-zero matrix is degenerate")
    v = _start_vector(w.shape[1]) if v is None else v / np.linalg.norm(v)
    u = w @ v
    for _ in range(iters):
        u = w @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            # start vector in the null space; restart from the largest column
            v = np.zeros(w.shape[1])
            v[np.argmax(np.linalg.norm(w, axis=0))] = 1.0
            continue
        u /= nu
        v = w.T @ u
        v /= np.linalg.norm(v)
    u = w @ v
    sigma = np.linalg.norm(u)
    return sigma, u / sigma, v


def spectral_norm(w, iters: int = 50) -> float:
    """Power-iteration estimate of the largest singular value of ``w``.

    The estimate never exceeds the true value and is non-decreasing in ``iters``.
    """
    return float(power_iteration(w, iters)[0])


def normalize_weights(model: MlpModel, iters: int = 1000) -> MlpModel:
    """Divide every feature-extractor weight matrix by its spectral norm."""
    layers = list(model.layers)
    for i in range(model.head_index):
        w = layers[i].w
        layers[i] = replace(layers[i], w=w / spectral_norm(w, iters))
    return replace(model, layers=tuple(layers))


# --- training ---------------------------------------------------------------

@dataclass
class AdversarialConfig:
    steps: int = 20
    epsilon: float = 0.1
    step_size: Optional[float] = None
    norm: float = 2

    def __post_init__(self):
        if self.steps < 1 or self.epsilon < 0:
            raise DomainError("adversarial steps must be >= 1 and epsilon >= 0")


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.1
    batch_size: int = 32
    power_iters_train: int = 1
    power_iters_freeze: int = 1000
    adversarial: Optional[AdversarialConfig] = None

    def __post_init__(self):
        # epochs == 0 is allowed and returns the initialized model
        if self.epochs < 0 or min(self.batch_size, self.power_iters_train, self.power_iters_freeze) < 1:
            raise DomainError("batch_size and power iteration counts must be >= 1")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")


def _forward_cache(ws, bs, acts, x):
    pre, post = [], [x]
    for w, b, act in zip(ws, bs, acts):
        z = post[-1] @ w.T + b
        pre.append(z)
        post.append(_activate(act, z))
    return pre, post


def _backward(ws, acts, pre, post, grad_out):
    """Gradients of a scalar loss w.r.t. weights, biases and the batch input."""
    gw, gb = [None] * len(ws), [None] * len(ws)
    g = grad_out
    for i in reversed(range(len(ws))):
        g = g * _activation_slope(acts[i], pre[i], post[i + 1])
        gw[i] = g.T @ post[i]
        gb[i] = g.sum(axis=0)
        g = g @ ws[i]
    return gw, gb, g


def cross_entropy_grad(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    loss = -log_softmax(logits, axis=1)[np.arange(n), labels].mean()
    g = softmax(logits, axis=1)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def accuracy(model, inputs, labels) -> float:
    return float(np.mean(model.predict(inputs) == np.asarray(labels)))


def train_toy(inputs, labels, cfg: TrainConfig = None, *, d=2, hidden=(16, 16), head_hidden=(16,),
              num_classes=None, seed=0) -> MlpModel:
    """Train a spectrally normalized MLP with mini-batch SGD on cross-entropy.

    The feature-extractor weights are reparametrized as ``W / sigma(W)`` at
    every step (``power_iters_train`` warm-started power iterations) and the
    returned model is frozen with ``power_iters_freeze`` iterations.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise DomainError("need a non-empty (N, m) input array with N labels")
    if not np.issubdtype(y.dtype, np.integer) and not np.all(np.mod(y, 1) == 0):
        raise DomainError("labels must be integers")
    y = y.astype(int)
    k = int(num_classes if num_classes is not None else y.max() + 1)
    if y.min() < 0 or y.max() >= k:
        raise DomainError(f"labels must lie in 0..{k - 1}")

    rng = np.random.default_rng(seed)
    model = init_mlp(x.shape[1], k, d=d, hidden=hidden, head_hidden=head_hidden, seed=seed)
    ws = [np.array(l.w) for l in model.layers]
    bs = [np.array(l.b) for l in model.layers]
    acts = [l.act for l in model.layers]
    n_sn = model.head_index
    vs = [None] * n_sn

    def effective(iters):
        eff, stats = list(ws), []
        for i in range(n_sn):
            sigma, u, v = power_iteration(ws[i], iters, vs[i])
            vs[i] = v
            eff[i] = ws[i] / sigma
            stats.append((sigma, u, v))
        return eff, stats

    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            eff, stats = effective(cfg.power_iters_train)
            if cfg.adversarial is not None:
                xb = _perturb_batch(eff, bs, acts, xb, yb, cfg.adversarial)
            pre, post = _forward_cache(eff, bs, acts, xb)
            _, g = cross_entropy_grad(post[-1], yb)
            gw, gb, _ = _backward(eff, acts, pre, post, g)
            for i in range(len(ws)):
                if i < n_sn:
                    sigma, u, v = stats[i]
                    gw[i] = (gw[i] - np.sum(gw[i] * eff[i]) * np.outer(u, v)) / sigma
                ws[i] -= cfg.learning_rate * gw[i]
                bs[i] -= cfg.learning_rate * gb[i]

    trained = MlpModel(tuple(Layer(w, b, a) for w, b, a in zip(ws, bs, acts)), model.head_index)
    trained = normalize_weights(trained, cfg.power_iters_freeze)
    log.info("train accuracy %.4f after %d epochs", accuracy(trained, x, y), cfg.epochs)
    return trained


def _perturb_batch(ws, bs, acts, xb, yb, adv: AdversarialConfig):
    from .attacks import pgd_batch

    def loss_grad(xs):
        pre, post = _forward_cache(ws, bs, acts, xs)
        _, g = cross_entropy_grad(post[-1], yb)
        return _backward(ws, acts, pre, post, g)[2]

    step = adv.step_size if adv.step_size is not None else 2.5 * adv.epsilon / adv.steps
    return pgd_batch(loss_grad, xb, adv.epsilon, adv.steps, step, adv.norm, bounds=None)
