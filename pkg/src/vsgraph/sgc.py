"""Simple graph convolution trained on anchors only.

The SGC stack is linear, so its L propagation steps can be applied to the
features once (``S^L X``) and the remaining model is a softmax regression
with a single (feature_dim, class_count) weight matrix. Training is full
batch with Adam, L2 weight decay added to the gradient, and zero init.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .datastore import load_matrix, save_matrix
from .errors import ArgumentError, DivergenceError, ShapeError, ValidationError
from .graph import PropagationOperator, propagate


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 5000
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # fraction of anchors kept per run; None uses all of them
    anchor_subsample: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ArgumentError(f"epochs must be a positive integer, got {self.epochs}")
        if not self.weight_decay >= 0:
            raise ArgumentError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ArgumentError("invalid Adam parameters")
        if self.anchor_subsample is not None and not 0 < self.anchor_subsample <= 1:
            raise ArgumentError("anchor_subsample must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SgcModel:
    weight: np.ndarray
    layers: int = 1
    config: TrainConfig = field(default_factory=TrainConfig)
    final_loss: float = float("nan")
    loss_curve: np.ndarray | None = None

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def class_count(self) -> int:
        return self.weight.shape[1]


class Adam:
    """Adam with coupled L2 decay: ``g + weight_decay * param`` feeds the moments."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = None
        self.v = None

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        self.t += 1
        if self.weight_decay:
            grad = grad + self.weight_decay * param
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        denom = np.sqrt(self.v) / np.sqrt(bc2) + self.eps
        param -= (self.lr / bc1) * (self.m / denom)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(weight, features, targets):
    """Summed cross-entropy of ``softmax(features @ weight)`` against integer targets.

    Returns ``(loss, d loss / d weight)``; no regularization term.
    """
    logp = log_softmax(features @ weight)
    rows = np.arange(features.shape[0])
    loss = -logp[rows, targets].sum()
    residual = np.exp(logp)
    residual[rows, targets] -= 1.0
    return float(loss), features.T @ residual


def smooth_features(operator: PropagationOperator, features, layers: int = 1) -> np.ndarray:
    """Apply the propagation operator `layers` times: ``S^L X``."""
    if int(layers) != layers or layers < 1:
        raise ArgumentError(f"layer count must be >= 1, got {layers}")
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != operator.node_count:
        raise ShapeError(f"features {x.shape} vs operator with {operator.node_count} nodes")
    for _ in range(int(layers)):
        x = propagate(operator, x)
    return x


def anchor_batch(smoothed, anchors: AnchorSet, config: TrainConfig | None = None):
    """Rows and targets for the anchors, in (sample, class) order."""
    samples, classes = anchors.by_sample()
    if config is not None and config.anchor_subsample is not None:
        rng = np.random.default_rng(config.seed)
        keep = max(1, int(round(config.anchor_subsample * samples.size)))
        pick = np.sort(rng.choice(samples.size, size=keep, replace=False))
        samples, classes = samples[pick], classes[pick]
    return smoothed[samples], classes


def train(smoothed, anchors: AnchorSet, class_count: int, config: TrainConfig = TrainConfig(),
          layers: int = 1) -> SgcModel:
    x = np.asarray(smoothed, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"smoothed features must be 2-D, got {x.shape}")
    if len(anchors) == 0:
        raise ValidationError("cannot train on an empty anchor set")
    if anchors.samples.max() >= x.shape[0] or anchors.samples.min() < 0:
        raise ValidationError("anchor sample index outside the feature matrix")
    if anchors.classes.max() >= class_count:
        raise ValidationError("anchor class outside class_count")

    xa, ya = anchor_batch(x, anchors, config)
    weight = np.zeros((x.shape[1], class_count))
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps, config.weight_decay)
    curve = np.empty(config.epochs)
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            loss, grad = loss_and_grad(weight, xa, ya)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            curve[epoch] = loss
            opt.step(weight, grad)
            # an overflowed moment freezes the weights rather than producing NaN
            if not (np.isfinite(opt.v).all() and np.isfinite(weight).all()):
                raise DivergenceError(epoch, loss)
        final, _ = loss_and_grad(weight, xa, ya)
    if not np.isfinite(final) or not np.all(np.isfinite(weight)):
        raise DivergenceError(config.epochs, final)
    weight.flags.writeable = False
    return SgcModel(weight, int(layers), config, final, curve)


_FLOOR = float(np.finfo(np.float32).tiny)


def infer(model: SgcModel, smoothed) -> np.ndarray:
    """GNN labels: row-wise softmax of ``smoothed @ weight``."""
    x = np.asarray(smoothed, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise ShapeError(f"features {x.shape} vs weight {model.weight.shape}")
    p = softmax(x @ model.weight)
    # keep every entry strictly positive, also after a float32 round trip
    p = np.maximum(p, _FLOOR)
    return p / p.sum(axis=1, keepdims=True)


# ---------------------------------------------------------- persistence


def save_model(model: SgcModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix(model.weight, directory / "layer_0.vsgm")
    meta = {
        "layers": model.layers,
        "weight_files": ["layer_0.vsgm"],
        "feature_dim": model.feature_dim,
        "class_count": model.class_count,
        "final_loss": model.final_loss,
        "config": asdict(model.config),
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_model(directory) -> SgcModel:
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text(encoding="utf-8"))
    weight = load_matrix(directory / meta["weight_files"][0]).astype(np.float64)
    weight.flags.writeable = False
    return SgcModel(weight, int(meta["layers"]), TrainConfig(**meta["config"]), float(meta["final_loss"]))
