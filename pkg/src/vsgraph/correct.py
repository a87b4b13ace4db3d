"""Final-label blending, progressive anchor rounds and the soft-label loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorSet, anchors_from_pairs
from .errors import ArgumentError, InfiniteLossError, ShapeError, ValidationError
from .graph import PropagationOperator
from .sgc import SgcModel, TrainConfig, infer, train

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-4


@dataclass(frozen=True)
class BlendConfig:
    lam: float = 0.5
    tau_f: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ArgumentError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.tau_f < 1.0:
            raise ArgumentError(f"tau_f must lie in (0, 1), got {self.tau_f}")


def check_stochastic(p, name, tol=STOCHASTIC_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {p.shape}")
    bad = np.flatnonzero(
        (np.abs(p.sum(axis=1) - 1.0) > tol) | (p.min(axis=1, initial=0.0) < 0) | ~np.isfinite(p).all(axis=1)
    )
    if bad.size:
        raise ValidationError(f"{name} row {int(bad[0])} is not a probability distribution")
    return p


def combine(p_g, p_c, config: BlendConfig = BlendConfig()) -> np.ndarray:
    """Keep confident GNN rows, blend the rest with the CNN labels.

    Row i is ``p_g[i]`` when ``max(p_g[i]) >= tau_f`` and
    ``lam * p_g[i] + (1 - lam) * p_c[i]`` otherwise.
    """
    g = check_stochastic(p_g, "p_g")
    c = check_stochastic(p_c, "p_c")
    if g.shape != c.shape:
        raise ShapeError(f"p_g {g.shape} and p_c {c.shape} differ")
    confident = g.max(axis=1) >= config.tau_f
    out = config.lam * g + (1.0 - config.lam) * c
    out[confident] = g[confident]
    return out


def soft_cross_entropy(targets, predictions) -> float:
    """Sum over samples and classes of ``-target * log(prediction)``."""
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.shape != p.shape:
        raise ShapeError(f"targets {t.shape} and predictions {p.shape} differ")
    live = t > 0
    if np.any(live & (p <= 0)):
        i, j = np.argwhere(live & (p <= 0))[0]
        raise InfiniteLossError(f"prediction is zero at ({i}, {j}) where the target is positive")
    return float(-(t[live] * np.log(p[live])).sum())


def progressive_anchors(p_g, tau_f: float) -> AnchorSet:
    """Samples whose top GNN probability is strictly above `tau_f`, labelled by argmax."""
    p = check_stochastic(p_g, "p_g")
    conf = p.max(axis=1)
    keep = np.flatnonzero(conf > tau_f)
    return anchors_from_pairs(keep, p[keep].argmax(axis=1), conf[keep], p.shape[1])


@dataclass
class RoundRecord:
    round: int
    anchor_count: int
    final_loss: float
    anchor_precision: float | None = None
    accuracy: float | None = None
    class_counts: list = field(default_factory=list)

    def to_json(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def progressive_train(operator: PropagationOperator, smoothed, initial_anchors: AnchorSet,
                      rounds: int, train_config: TrainConfig = TrainConfig(),
                      tau_f: float = 0.7, ground_truth=None):
    """Retrain from scratch on confident GNN labels of the previous round.

    The graph, and hence `smoothed`, stays fixed across rounds. Returns the
    last trained model, its GNN labels and one :class:`RoundRecord` per
    completed round. Stops early when a round would have no anchors.
    """
    if rounds < 1:
        raise ArgumentError(f"rounds must be >= 1, got {rounds}")
    x = np.asarray(smoothed, dtype=np.float64)
    if x.shape[0] != operator.node_count:
        raise ShapeError(f"smoothed features {x.shape} vs {operator.node_count} nodes")
    class_count = initial_anchors.class_count
    truth = None if ground_truth is None else np.asarray(ground_truth)

    anchors = initial_anchors
    model: SgcModel | None = None
    p_g = None
    history: list[RoundRecord] = []
    for r in range(1, rounds + 1):
        if len(anchors) == 0:
            log.info("round %d has no anchors above tau_f=%g; stopping", r, tau_f)
            break
        model = train(x, anchors, class_count, train_config)
        p_g = infer(model, x)
        rec = RoundRecord(r, len(anchors), model.final_loss,
                          class_counts=anchors.class_counts().tolist())
        if truth is not None:
            rec.anchor_precision = anchors.precision(truth)
            closed = truth < class_count
            rec.accuracy = float(np.mean(p_g.argmax(axis=1)[closed] == truth[closed]))
        history.append(rec)
        anchors = progressive_anchors(p_g, tau_f)
    return model, p_g, history
