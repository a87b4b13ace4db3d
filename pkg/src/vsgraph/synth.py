"""Synthetic web-labelled datasets with planted semantic noise.

Every concept (closed class or out-of-distribution) owns a unit visual
centroid and a unit text centroid. Web label c is correct with probability
``1 - rho_c``; otherwise the sample really belongs to the confusing concept
planted on c, which may be another closed class or an OOD concept. Metadata
follows the true concept except for a corrupted fraction of samples whose
metadata follows the web label. Label descriptions are the closed-class text
centroids, so OOD concepts can never be anchored.

Spreads are noise norms: a perturbation with spread s is drawn as
N(0, s^2 / dim) per coordinate, so its expected squared norm is s^2.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .datastore import DatasetManifest, save_labels, save_manifest, save_matrix
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    samples: int = 5000
    classes: int = 20
    ood_concepts: int = 5
    feature_dim: int = 128
    text_dim: int = 64
    noise_rate: float = 0.2
    majority_noise_rate: float = 0.6
    majority_fraction: float = 0.3
    visual_spread: float = 0.3
    text_spread: float = 0.3
    metadata_corruption: float = 0.1
    max_centroid_cos: float = 0.3
    # fabricated CNN labels: softmax(temperature * cos(feature, web-label mean)
    # + label_bias * onehot(web label) + noise), a classifier that partly memorised its labels
    cnn_temperature: float = 12.0
    cnn_label_bias: float = 3.0
    cnn_logit_noise: float = 0.5
    seed: int = 42
    noise_rates: tuple | None = None

    def __post_init__(self):
        rates = [self.noise_rate, self.majority_noise_rate, self.metadata_corruption]
        if self.noise_rates is not None:
            if len(self.noise_rates) != self.classes:
                raise ConfigError("noise_rates needs one entry per class")
            rates += list(self.noise_rates)
        if any(not 0.0 <= r <= 1.0 for r in rates) or not 0 <= self.majority_fraction <= 1:
            raise ConfigError("noise and corruption rates must lie in [0, 1]")
        if self.feature_dim < 2 or self.text_dim < 2:
            raise ConfigError("embedding dims must be >= 2")
        if self.classes < 1 or self.samples < self.classes:
            raise ConfigError("need samples >= classes >= 1")
        if self.ood_concepts < 0:
            raise ConfigError("ood_concepts must be >= 0")

    def class_rates(self) -> np.ndarray:
        if self.noise_rates is not None:
            return np.asarray(self.noise_rates, dtype=np.float64)
        return np.full(self.classes, self.noise_rate)


@dataclass(frozen=True, eq=False)
class SynthBundle:
    features: np.ndarray
    metadata: np.ndarray
    label_descriptions: np.ndarray
    web_labels: np.ndarray
    ground_truth: np.ndarray  # closed class, or `classes` for OOD samples
    concepts: np.ndarray  # true concept id in [0, classes + ood_concepts)
    concept_to_class: np.ndarray
    confusing_concept: np.ndarray  # planted concept per class
    noise_rates: np.ndarray
    cnn_labels: np.ndarray
    config: SynthConfig = field(default_factory=SynthConfig)

    @property
    def class_count(self) -> int:
        return self.config.classes

    @property
    def closed(self) -> np.ndarray:
        return self.ground_truth < self.class_count

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in ("features", "metadata", "label_descriptions", "web_labels",
                     "ground_truth", "concepts", "cnn_labels"):
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()


def _unit(x):
    return x / np.sqrt((x * x).sum(axis=-1, keepdims=True))


def separated_centroids(rng, count, dim, max_cos, attempts=2000) -> np.ndarray:
    """Unit vectors with pairwise cosine <= max_cos, by rejection sampling."""
    out = []
    for i in range(count):
        for _ in range(attempts):
            v = _unit(rng.normal(size=dim))
            if not out or np.max(np.asarray(out) @ v) <= max_cos:
                out.append(v)
                break
        else:
            raise ConfigError(
                f"could not place centroid {i} of {count} in {dim} dims with cosine <= {max_cos}"
            )
    return np.asarray(out).reshape(count, dim)


def _perturb(rng, centers, spread):
    dim = centers.shape[1]
    return _unit(centers + rng.normal(size=centers.shape) * (spread / np.sqrt(dim)))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def generate(config: SynthConfig = SynthConfig()) -> SynthBundle:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    C, K = cfg.classes, cfg.classes + cfg.ood_concepts

    visual = separated_centroids(rng, K, cfg.feature_dim, cfg.max_centroid_cos)
    text = separated_centroids(rng, K, cfg.text_dim, cfg.max_centroid_cos)

    rates = cfg.class_rates()
    if cfg.noise_rates is None:
        n_major = int(round(cfg.majority_fraction * C))
        rates[rng.choice(C, size=n_major, replace=False)] = cfg.majority_noise_rate

    # planted confusing concept per class: OOD concepts go to distinct
    # classes, the rest follow a cyclic derangement of the closed classes
    cycle = rng.permutation(C)
    confusing = np.empty(C, dtype=np.int64)
    confusing[cycle] = np.roll(cycle, -1)
    ood_holders = rng.permutation(C)[: min(cfg.ood_concepts, C)]
    confusing[ood_holders] = C + np.arange(ood_holders.size)

    web = rng.permutation(np.arange(cfg.samples) % C).astype(np.int64)
    noisy = rng.random(cfg.samples) < rates[web]
    concepts = np.where(noisy, confusing[web], web)

    features = _perturb(rng, visual[concepts], cfg.visual_spread)
    corrupted = rng.random(cfg.samples) < cfg.metadata_corruption
    meta_source = np.where(corrupted, web, concepts)
    metadata = _perturb(rng, text[meta_source], cfg.text_spread)

    concept_to_class = np.where(np.arange(K) < C, np.arange(K), C)
    truth = concept_to_class[concepts]

    # a CNN fitted to web labels: class prototypes are web-label feature means
    protos = np.zeros((C, cfg.feature_dim))
    np.add.at(protos, web, features)
    protos = _unit(protos)
    logits = cfg.cnn_temperature * (features @ protos.T)
    logits[np.arange(cfg.samples), web] += cfg.cnn_label_bias
    logits += rng.normal(size=logits.shape) * cfg.cnn_logit_noise
    cnn = _softmax(logits)

    f32 = lambda a: np.ascontiguousarray(a, dtype=np.float32)  # noqa: E731
    return SynthBundle(
        features=f32(features),
        metadata=f32(metadata),
        label_descriptions=f32(text[:C]),
        web_labels=web,
        ground_truth=truth.astype(np.int64),
        concepts=concepts.astype(np.int64),
        concept_to_class=concept_to_class.astype(np.int64),
        confusing_concept=confusing,
        noise_rates=rates,
        cnn_labels=f32(cnn),
        config=cfg,
    )


def write_bundle(bundle: SynthBundle, directory) -> Path:
    """Write all bundle files plus ``manifest.json``; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(bundle.features, d / "features.vsgm")
    save_matrix(bundle.metadata, d / "metadata.vsgm")
    save_matrix(bundle.label_descriptions, d / "label_descriptions.vsgm")
    save_matrix(bundle.cnn_labels, d / "cnn_labels.vsgm")
    save_labels(bundle.web_labels, d / "labels.csv")
    save_labels(bundle.ground_truth, d / "ground_truth.csv")
    manifest = DatasetManifest(
        features=d / "features.vsgm",
        metadata_embeddings=d / "metadata.vsgm",
        label_descriptions=d / "label_descriptions.vsgm",
        labels=d / "labels.csv",
        sample_count=int(bundle.features.shape[0]),
        class_count=bundle.class_count,
        ground_truth=d / "ground_truth.csv",
        cnn_labels=d / "cnn_labels.vsgm",
        embedding_dims={"features": int(bundle.features.shape[1]),
                        "metadata": int(bundle.metadata.shape[1])},
    )
    path = d / "manifest.json"
    save_manifest(manifest, path)
    (d / "synth_config.json").write_text(
        json.dumps(asdict(bundle.config), indent=2) + "\n", encoding="utf-8"
    )
    return path


def oracle_report(bundle: SynthBundle, corrected, anchors: AnchorSet | None = None,
                  tau_f: float = 0.7) -> dict:
    """Score corrected labels against the planted ground truth by direct scan."""
    p = np.asarray(corrected, dtype=np.float64)
    C = bundle.class_count
    truth = bundle.ground_truth
    hits = closed = web_hits = ood = ood_low = 0
    for i in range(p.shape[0]):
        row = p[i]
        best = 0
        for c in range(1, C):
            if row[c] > row[best]:
                best = c
        if truth[i] < C:
            closed += 1
            hits += best == truth[i]
            web_hits += bundle.web_labels[i] == truth[i]
        else:
            ood += 1
            ood_low += row[best] < tau_f
    report = {
        "accuracy": hits / closed if closed else float("nan"),
        "web_label_accuracy": web_hits / closed if closed else float("nan"),
        "closed_samples": closed,
        "ood_samples": ood,
        "ood_low_confidence": ood_low / ood if ood else float("nan"),
    }
    if anchors is not None:
        good = sum(int(truth[s] == c) for s, c in zip(anchors.samples, anchors.classes))
        report["anchor_precision"] = good / len(anchors) if len(anchors) else float("nan")
        report["anchor_count"] = len(anchors)
    return report
