"""Single-label, multi-label and open-set evaluation.

Every ranking breaks ties toward the lower index (class index for per-sample
rankings, sample index for per-class rankings).
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, ShapeError, ValidationError


def _scores(predictions):
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"predictions must be 2-D, got {p.shape}")
    return p


def top_k_indices(scores, k):
    """Column indices of the k largest entries per row, lower index first on ties."""
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def topk_accuracy(predictions, truth, k: int = 1) -> float:
    p = _scores(predictions)
    y = np.asarray(truth, dtype=np.int64)
    if y.shape != (p.shape[0],):
        raise ShapeError(f"truth {y.shape} vs predictions {p.shape}")
    if not 1 <= k <= p.shape[1]:
        raise ArgumentError(f"k must be in [1, {p.shape[1]}], got {k}")
    if y.size == 0:
        return float("nan")
    hit = (top_k_indices(p, k) == y[:, None]).any(axis=1)
    return float(hit.mean())


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(denom, dtype=np.float64), where=denom > 0)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def _harmonic(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def multilabel_counts(predictions, truth, K: int = 3):
    """Per-class (tp, fp, fn) after keeping the top-K labels of every sample."""
    p = _scores(predictions)
    t = np.asarray(truth).astype(bool)
    if t.shape != p.shape:
        raise ShapeError(f"truth {t.shape} vs predictions {p.shape}")
    if not 1 <= K <= p.shape[1]:
        raise ArgumentError(f"K must be in [1, {p.shape[1]}], got {K}")
    pred = np.zeros_like(t)
    np.put_along_axis(pred, top_k_indices(p, K), True, axis=1)
    tp = (pred & t).sum(axis=0)
    fp = (pred & ~t).sum(axis=0)
    fn = (~pred & t).sum(axis=0)
    return tp, fp, fn


def multilabel_f1(predictions, truth, K: int = 3, c_f1: str = "per_class_mean"):
    """Return ``(C-F1, O-F1)`` for top-K binarized predictions.

    ``c_f1="per_class_mean"`` averages per-class F1 over all classes (a class
    with no positives and no predictions scores 0); ``"harmonic"`` takes the
    harmonic mean of macro precision and macro recall instead.
    """
    tp, fp, fn = multilabel_counts(predictions, truth, K)
    if c_f1 == "per_class_mean":
        cf1 = float(_f1(tp, fp, fn).mean())
    elif c_f1 == "harmonic":
        cf1 = _harmonic(float(_ratio(tp, tp + fp).mean()), float(_ratio(tp, tp + fn).mean()))
    else:
        raise ArgumentError(f"unknown C-F1 convention {c_f1!r}")
    T, F, N = tp.sum(), fp.sum(), fn.sum()
    of1 = float(2 * T / (2 * T + F + N)) if (2 * T + F + N) > 0 else 0.0
    return cf1, of1


def average_precision(scores, positives) -> float:
    """Mean of precision@rank over the ranks of the positives (no interpolation)."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives).astype(bool)
    order = np.argsort(-s, kind="stable")
    hits = pos[order]
    if not hits.any():
        return float("nan")
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, ranks.size + 1) / ranks))


def mean_average_precision(predictions, truth) -> float:
    p = _scores(predictions)
    t = np.asarray(truth).astype(bool)
    if t.shape != p.shape:
        raise ShapeError(f"truth {t.shape} vs predictions {p.shape}")
    aps = []
    for c in range(p.shape[1]):
        if not t[:, c].any():
            warnings.warn(f"class {c} has no positives; skipped in mAP", stacklevel=2)
            continue
        aps.append(average_precision(p[:, c], t[:, c]))
    if not aps:
        return float("nan")
    return float(np.mean(aps))


@dataclass(frozen=True)
class OpenSetResult:
    precision: float
    recall: float
    f1: float
    per_class_precision: tuple
    per_class_recall: tuple
    evaluated_classes: tuple
    accepted: int
    rejected: int

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def openset_prf(predictions, truth, threshold: float = 0.2, c_f1: str = "harmonic",
                open_label: int | None = None) -> OpenSetResult:
    """Macro precision / recall / F1 over closed classes with confidence rejection.

    A sample is assigned its argmax class when its top probability is strictly
    above `threshold`, otherwise it is rejected. Truth values equal to
    `open_label` (default: the class count) mark open-set samples; an accepted
    open-set sample is a false positive for the class it lands in. Macro
    averages run over closed classes that have at least one truth sample.
    Unpacks as ``(C-P, C-R, C-F1)``.
    """
    p = _scores(predictions)
    C = p.shape[1]
    y = np.asarray(truth, dtype=np.int64)
    if y.shape != (p.shape[0],):
        raise ShapeError(f"truth {y.shape} vs predictions {p.shape}")
    if not 0 < threshold < 1:
        raise ArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    open_label = C if open_label is None else open_label
    closed = y != open_label
    if np.any(closed & ((y < 0) | (y >= C))):
        raise ValidationError("truth label outside the closed classes and not the open sentinel")
    if not closed.any():
        raise ValidationError("no closed-class truth samples")

    assigned = np.where(p.max(axis=1) > threshold, p.argmax(axis=1), -1)
    classes = np.unique(y[closed])
    tp = np.array([np.sum((assigned == c) & (y == c)) for c in classes])
    fp = np.array([np.sum((assigned == c) & (y != c)) for c in classes])
    support = np.array([np.sum(y == c) for c in classes])
    prec = _ratio(tp, tp + fp)
    rec = _ratio(tp, support)
    mp, mr = float(prec.mean()), float(rec.mean())
    if c_f1 == "harmonic":
        f1 = _harmonic(mp, mr)
    elif c_f1 == "per_class_mean":
        f1 = float(np.mean([_harmonic(a, b) for a, b in zip(prec, rec)]))
    else:
        raise ArgumentError(f"unknown C-F1 convention {c_f1!r}")
    n_acc = int(np.sum(assigned >= 0))
    return OpenSetResult(mp, mr, f1, tuple(prec.tolist()), tuple(rec.tolist()),
                         tuple(int(c) for c in classes), n_acc, int(p.shape[0] - n_acc))


@dataclass
class EvalReport:
    sample_count: int
    class_count: int
    top1: float | None = None
    top5: float | None = None
    closed_samples: int | None = None
    open_samples: int | None = None
    c_f1: float | None = None
    o_f1: float | None = None
    mAP: float | None = None
    open_threshold: float | None = None
    open_c_p: float | None = None
    open_c_r: float | None = None
    open_c_f1: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def table(self) -> str:
        cols = []
        if self.top1 is not None:
            cols += [("Top-1", self.top1), ("Top-5", self.top5)]
        if self.mAP is not None:
            cols += [("C-F1", self.c_f1), ("O-F1", self.o_f1), ("mAP", self.mAP)]
        if self.open_c_f1 is not None:
            cols += [("C-P/C-R", f"{100 * self.open_c_p:.2f}/{100 * self.open_c_r:.2f}"),
                     ("C-F1 (open)", self.open_c_f1)]

        def cell(v):
            return v if isinstance(v, str) else ("-" if v is None else f"{100 * v:.2f}")

        widths = [max(len(h), len(cell(v))) for h, v in cols]
        head = "  ".join(h.rjust(w) for (h, _), w in zip(cols, widths))
        body = "  ".join(cell(v).rjust(w) for (_, v), w in zip(cols, widths))
        return head + "\n" + body


def evaluate(predictions, truth, open_threshold: float | None = 0.2, K: int = 3) -> EvalReport:
    """Build a report. 1-D `truth` may use the class count as the open-set sentinel."""
    p = _scores(predictions)
    n, C = p.shape
    y = np.asarray(truth)
    report = EvalReport(sample_count=n, class_count=C)
    if y.ndim == 2:
        report.c_f1, report.o_f1 = multilabel_f1(p, y, K=min(K, C))
        report.mAP = mean_average_precision(p, y)
        return report
    closed = y < C
    report.closed_samples = int(closed.sum())
    report.open_samples = int(n - closed.sum())
    if closed.any():
        report.top1 = topk_accuracy(p[closed], y[closed], 1)
        report.top5 = topk_accuracy(p[closed], y[closed], min(5, C))
    if open_threshold is not None and closed.any():
        res = openset_prf(p, y, open_threshold)
        report.open_threshold = open_threshold
        report.open_c_p, report.open_c_r, report.open_c_f1 = res.precision, res.recall, res.f1
    return report
