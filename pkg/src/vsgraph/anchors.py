"""Graph-enhanced metadata embeddings and per-class anchor selection."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, MatrixWriteError, ShapeError, ValidationError
from .graph import PropagationOperator, propagate


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Selected (sample, class) pairs.

    Members are ordered by class, then by descending score, then by sample
    index. ``per_class_threshold`` is NaN for classes without anchors, and
    ``m`` is None for sets that were not built with a fixed per-class count.
    """

    samples: np.ndarray
    classes: np.ndarray
    scores: np.ndarray
    class_count: int
    m: int | None = None
    per_class_threshold: np.ndarray | None = None

    def __len__(self):
        return int(self.samples.size)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=self.class_count)

    def precision(self, truth) -> float:
        """Fraction of anchors whose class matches the given true labels."""
        if len(self) == 0:
            return float("nan")
        truth = np.asarray(truth)
        return float(np.mean(truth[self.samples] == self.classes))

    def by_sample(self):
        """Members re-ordered by (sample index, class index)."""
        order = np.lexsort((self.classes, self.samples))
        return self.samples[order], self.classes[order]


def _make_set(samples, classes, scores, class_count, m=None, thresholds=None):
    s = np.asarray(samples, dtype=np.int64)
    c = np.asarray(classes, dtype=np.int64)
    v = np.asarray(scores, dtype=np.float64)
    for a in (s, c, v):
        a.flags.writeable = False
    if thresholds is not None:
        thresholds = np.asarray(thresholds, dtype=np.float64)
        thresholds.flags.writeable = False
    return AnchorSet(s, c, v, int(class_count), m, thresholds)


def enhance_metadata(operator: PropagationOperator, metadata) -> np.ndarray:
    return propagate(operator, metadata)


def _cosine_rows(a, b):
    """Row-wise cosine of equally shaped 2-D arrays; -1 where row of `a` is zero."""
    num = (a * b).sum(axis=1)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    out = np.full(a.shape[0], -1.0)
    ok = na > 0
    out[ok] = num[ok] / (na[ok] * nb[ok])
    return np.clip(out, -1.0, 1.0)


def _check_descriptions(enhanced, label_descriptions):
    t = np.asarray(enhanced, dtype=np.float64)
    l = np.asarray(label_descriptions, dtype=np.float64)
    if t.ndim != 2 or l.ndim != 2 or t.shape[1] != l.shape[1]:
        raise ShapeError(
            f"enhanced embeddings {t.shape} and label descriptions {l.shape} disagree"
        )
    zero = np.flatnonzero((l * l).sum(axis=1) == 0)
    if zero.size:
        raise ValidationError(f"label description {int(zero[0])} has zero norm")
    return t, l


def score_anchors(enhanced, label_descriptions, web_labels) -> np.ndarray:
    """cos(t_hat_i, l_{y_i}) for every sample i."""
    t, l = _check_descriptions(enhanced, label_descriptions)
    y = np.asarray(web_labels, dtype=np.int64)
    if y.shape != (t.shape[0],):
        raise ShapeError(f"web labels shape {y.shape} vs {t.shape[0]} samples")
    if y.size and (y.min() < 0 or y.max() >= l.shape[0]):
        raise ValidationError("web label outside the label-description range")
    return _cosine_rows(t, l[y])


def score_all_labels(enhanced, label_descriptions) -> np.ndarray:
    """Cosine of every enhanced embedding against every label description, (N, C)."""
    t, l = _check_descriptions(enhanced, label_descriptions)
    tn = np.sqrt((t * t).sum(axis=1))
    ln = np.sqrt((l * l).sum(axis=1))
    out = np.full((t.shape[0], l.shape[0]), -1.0)
    ok = tn > 0
    out[ok] = (t[ok] @ l.T) / (tn[ok, None] * ln[None, :])
    return np.clip(out, -1.0, 1.0)


def _top_m(candidates, scores, m):
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:m]]


def _select(columns, scores_for, m, class_count, what):
    if m < 1:
        raise ArgumentError(f"m must be >= 1, got {m}")
    samples, classes, values = [], [], []
    thresholds = np.full(class_count, np.nan)
    for c in range(class_count):
        candidates = columns(c)
        col = scores_for(c)
        if candidates.size == 0:
            warnings.warn(f"{what} {c} has no samples; it gets no anchors", stacklevel=3)
            continue
        if candidates.size < m:
            warnings.warn(
                f"{what} {c} has {candidates.size} samples < m={m}; all are anchors",
                stacklevel=3,
            )
        chosen = _top_m(candidates, col, m)
        thresholds[c] = col[chosen[-1]]
        samples.append(chosen)
        classes.append(np.full(chosen.size, c))
        values.append(col[chosen])
    if samples:
        samples, classes, values = map(np.concatenate, (samples, classes, values))
    return _make_set(samples, classes, values, class_count, m, thresholds)


def select_anchors(scores, web_labels, m: int, class_count: int | None = None) -> AnchorSet:
    """Top-m samples per web-label class by score; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(web_labels, dtype=np.int64)
    if scores.shape != y.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {y.shape} must be equal 1-D")
    if class_count is None:
        class_count = int(y.max()) + 1 if y.size else 0
    return _select(lambda c: np.flatnonzero(y == c), lambda c: scores, int(m), class_count, "class")


def multi_label_anchor_sets(scores, web_labels, m: int) -> AnchorSet:
    """Per label, the top-m samples among those carrying that web label.

    `scores` is an (N, C) table, typically from :func:`score_all_labels`.
    A sample may anchor several labels.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(web_labels)
    if scores.shape != y.shape or scores.ndim != 2:
        raise ShapeError(f"scores {scores.shape} and web labels {y.shape} must match")
    return _select(
        lambda c: np.flatnonzero(y[:, c]), lambda c: scores[:, c], int(m), y.shape[1], "label"
    )


def anchors_from_pairs(samples, classes, scores, class_count) -> AnchorSet:
    """Wrap arbitrary pairs, re-ordered by class, descending score, then index."""
    samples = np.asarray(samples, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((samples, -scores, classes))
    return _make_set(samples[order], classes[order], scores[order], class_count)


# ---------------------------------------------------------- persistence


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_anchors(anchors: AnchorSet, destination) -> None:
    destination = Path(destination)
    rows = ["sample_id,class_id,score"]
    rows += [
        f"{int(s)},{int(c)},{float(v)!r}"
        for s, c, v in zip(anchors.samples, anchors.classes, anchors.scores)
    ]
    thresholds = None
    if anchors.per_class_threshold is not None:
        thresholds = [None if np.isnan(t) else float(t) for t in anchors.per_class_threshold]
    meta = {"m": anchors.m, "class_count": anchors.class_count, "per_class_threshold": thresholds}
    try:
        destination.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
        sidecar_path(destination).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise MatrixWriteError(destination, exc) from exc


def load_anchors(source) -> AnchorSet:
    source = Path(source)
    meta = json.loads(sidecar_path(source).read_text(encoding="utf-8"))
    class_count = int(meta["class_count"])
    samples, classes, scores = [], [], []
    with open(source, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "class_id", "score"]:
            raise FormatError(f"{source}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, c, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise FormatError(f"{source}: bad row at line {lineno}") from None
            if not 0 <= c < class_count:
                raise ValidationError(f"{source}: line {lineno} class {c} out of range")
            samples.append(s)
            classes.append(c)
            scores.append(v)
    thresholds = meta.get("per_class_threshold")
    if thresholds is not None:
        thresholds = [np.nan if t is None else t for t in thresholds]
    return _make_set(samples, classes, scores, class_count, meta.get("m"), thresholds)
