"""Feed-forward network with tanh hidden layers and a sigmoid output unit.

Trained by plain mini-batch SGD on class-weighted binary cross-entropy with an
L2 penalty on the weight matrices (biases are not penalized).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ParameterError, TrainingError


@dataclass(frozen=True)
class MlpHyperparams:
    hidden_sizes: tuple[int, ...] = (8,)
    learning_rate: float = 1e-2
    epochs: int = 40
    batch_size: int = 32
    l2_penalty: float = 1e-4
    seed: int = 0
    class_weight: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    def validate(self) -> None:
        if any(h < 1 for h in self.hidden_sizes):
            raise ParameterError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.epochs < 0:
            raise ParameterError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be positive")
        if self.l2_penalty < 0:
            raise ParameterError("l2_penalty must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_params(d: int, hidden_sizes, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, layer by layer."""
    params = []
    sizes = [d, *hidden_sizes, 1]
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        params.append(rng.uniform(-lim, lim, size=fan_out))
    return params


def forward(params, X):
    """Return the output logits and the list of layer activations."""
    acts = [X]
    a = X
    for W, b in zip(params[0:-2:2], params[1:-2:2]):
        a = np.tanh(a @ W + b)
        acts.append(a)
    logits = (a @ params[-2] + params[-1])[:, 0]
    return logits, acts


def loss_and_grad(params, X, y, w, l2):
    """Mean weighted BCE plus ``l2/2 * sum(W**2)`` and its gradient."""
    B = X.shape[0]
    logits, acts = forward(params, X)
    # softplus(z) - y*z, stable for large |z|
    bce = np.logaddexp(0.0, logits) - y * logits
    loss = float(np.dot(w, bce) / B)
    loss += 0.5 * l2 * sum(float(np.sum(W * W)) for W in params[0::2])
    grads = [None] * len(params)
    delta = ((w * (_sigmoid(logits) - y)) / B)[:, None]
    n_layers = len(params) // 2
    for layer in range(n_layers - 1, -1, -1):
        W = params[2 * layer]
        a_in = acts[layer]
        grads[2 * layer] = a_in.T @ delta + l2 * W
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = (delta @ W.T) * (1.0 - a_in * a_in)
    return loss, grads


@dataclass(eq=False)
class Mlp:
    params: list
    feature_dim: int
    hyperparams: MlpHyperparams
    loss_history: list = field(default_factory=list)

    kind = "mlp"

    def logits(self, X: np.ndarray) -> np.ndarray:
        return forward(self.params, X)[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.clip(_sigmoid(self.logits(X)), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "mlp", "feature_dim": self.feature_dim,
                "hyperparams": self.hyperparams.to_dict(),
                "layers": [{"weights": W.tolist(), "bias": b.tolist()}
                           for W, b in zip(self.params[0::2], self.params[1::2])]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Mlp":
        params = []
        for layer in doc["layers"]:
            params.append(np.array(layer["weights"], dtype=float))
            params.append(np.array(layer["bias"], dtype=float))
        return cls(params, int(doc["feature_dim"]), MlpHyperparams(**doc["hyperparams"]))


def class_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(y.size)
    n1 = y.sum()
    return np.where(y == 1, y.size / (2.0 * n1), y.size / (2.0 * (y.size - n1)))


def train_mlp(train, hp: MlpHyperparams) -> Mlp:
    hp.validate()
    X = np.asarray(train.features, dtype=float)
    y = np.asarray(train.labels, dtype=float)
    n1 = int(y.sum())
    if n1 == 0 or n1 == y.size:
        raise TrainingError("training set holds a single class")
    rng = np.random.default_rng(hp.seed)
    params = init_params(X.shape[1], hp.hidden_sizes, rng)
    w = class_weights(y, hp.class_weight)
    n, bs, lr = y.size, hp.batch_size, hp.learning_rate
    history = []
    for epoch in range(hp.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            b = perm[start:start + bs]
            loss, grads = loss_and_grad(params, X[b], y[b], w[b], hp.l2_penalty)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}")
            total += loss * b.size
            for p, g in zip(params, grads):
                p -= lr * g
        history.append(total / n)
    return Mlp(params, X.shape[1], hp, history)
