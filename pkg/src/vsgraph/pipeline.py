"""File-based stages of the label-correction pipeline and the end-to-end run.

Each stage reads its inputs from disk and writes its outputs to disk, and
:func:`run_pipeline` is just the stages in order. Running the stages one by
one therefore reproduces a full run byte for byte.
"""

from __future__ import annotations

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import anchors as anc
from . import correct, graph, metrics, sgc
from .datastore import load_labels, load_manifest, load_matrix, save_matrix
from .errors import ConfigError, StageError, VSGraphError

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
THREADS_ENV = "VSGRAPH_THREADS"


@dataclass
class RunConfig:
    manifest: str | None = None
    output: str = "run"
    k: int = 5
    w: float = 0.0
    m: int = 10
    layers: int = 1
    lam: float = 0.5
    tau_f: float = 0.7
    rounds: int = 1
    train: sgc.TrainConfig = field(default_factory=sgc.TrainConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = sgc.TrainConfig(**self.train)
        if self.manifest is not None:
            self.manifest = str(self.manifest)
        self.output = str(self.output)
        # validation of lam/tau_f lives in BlendConfig
        correct.BlendConfig(self.lam, self.tau_f)
        if self.k < 1 or self.m < 1 or self.layers < 1 or self.rounds < 1:
            raise ConfigError("k, m, layers and rounds must all be >= 1")
        if self.w < 0:
            raise ConfigError(f"w must be >= 0, got {self.w}")

    @classmethod
    def from_json(cls, path, **overrides):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def to_json(self):
        out = asdict(self)
        out["train"] = asdict(self.train)
        return out


# ----------------------------------------------------------------- stages


def build_graph(features_path, graph_path, operator_path, k=5, w=0.0):
    g = graph.knn_graph(load_matrix(features_path), k)
    graph.save_graph(g, graph_path)
    op = graph.normalize(g, w)
    graph.save_operator(op, operator_path)
    return {"nodes": g.node_count, "edges": g.nnz // 2,
            "min_degree": int(g.row_degree_counts().min())}


def enhance_text(operator_path, metadata_path, out_path):
    op = graph.load_operator(operator_path)
    enhanced = anc.enhance_metadata(op, load_matrix(metadata_path))
    save_matrix(enhanced, out_path)
    return {"rows": int(enhanced.shape[0])}


def select_anchors(enhanced_path, descriptions_path, labels_path, class_count, m, out_path,
                   ground_truth_path=None):
    enhanced = load_matrix(enhanced_path)
    desc = load_matrix(descriptions_path)
    labels = load_labels(labels_path, class_count)
    if labels.ndim == 2:
        table = anc.score_all_labels(enhanced, desc)
        aset = anc.multi_label_anchor_sets(table, labels, m)
    else:
        scores = anc.score_anchors(enhanced, desc, labels)
        aset = anc.select_anchors(scores, labels, m, class_count)
    anc.save_anchors(aset, out_path)
    info = {"count": len(aset), "per_class_min": int(aset.class_counts().min()),
            "per_class_max": int(aset.class_counts().max())}
    if ground_truth_path is not None:
        info["anchor_precision"] = aset.precision(load_labels(ground_truth_path, class_count + 1))
    return info


def _smoothed(operator_path, features_path, layers):
    op = graph.load_operator(operator_path)
    return op, sgc.smooth_features(op, load_matrix(features_path), layers)


def train_gnn(operator_path, features_path, anchors_path, class_count, model_dir,
              layers=1, config=sgc.TrainConfig()):
    _, x = _smoothed(operator_path, features_path, layers)
    model = sgc.train(x, anc.load_anchors(anchors_path), class_count, config, layers)
    sgc.save_model(model, model_dir)
    curve = model.loss_curve
    stride = max(1, curve.size // 50)
    return {"final_loss": model.final_loss,
            "loss_curve": [[int(e), float(curve[e])] for e in range(0, curve.size, stride)]}


def label(model_dir, operator_path, features_path, out_path):
    model = sgc.load_model(model_dir)
    _, x = _smoothed(operator_path, features_path, model.layers)
    p_g = sgc.infer(model, x)
    save_matrix(p_g, out_path)
    conf = p_g.max(axis=1)
    return {"mean_confidence": float(conf.mean())}


def write_top_entries(p, path, top=5):
    order = metrics.top_k_indices(p, min(top, p.shape[1]))
    lines = ["sample_id,class_id,prob"]
    for i, row in enumerate(order):
        lines.extend(f"{i},{int(c)},{float(np.float32(p[i, c]))!r}" for c in row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def combine(p_g_path, p_c_path, out_path, lam=0.5, tau_f=0.7, top_csv=None):
    p_g = load_matrix(p_g_path)
    p_c = load_matrix(p_c_path)
    p_f = correct.combine(p_g, p_c, correct.BlendConfig(lam, tau_f))
    save_matrix(p_f, out_path)
    if top_csv is not None:
        write_top_entries(load_matrix(out_path), top_csv)
    return {"confident_fraction": float(np.mean(p_g.max(axis=1) >= tau_f))}


def progressive(operator_path, features_path, anchors_path, class_count, out_path, history_path,
                rounds=3, tau_f=0.7, layers=1, config=sgc.TrainConfig(), ground_truth_path=None,
                model_dir=None):
    op, x = _smoothed(operator_path, features_path, layers)
    truth = None
    if ground_truth_path is not None:
        truth = load_labels(ground_truth_path, class_count + 1)
    model, p_g, history = correct.progressive_train(
        op, x, anc.load_anchors(anchors_path), rounds, config, tau_f, truth)
    save_matrix(p_g, out_path)
    if model_dir is not None:
        sgc.save_model(model, model_dir)
    with open(history_path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_json()) + "\n")
    return {"rounds": [rec.to_json() for rec in history]}


def evaluate(pred_path, truth_path, open_threshold=0.2, K=3):
    pred = load_matrix(pred_path)
    C = pred.shape[1]
    text = Path(truth_path).read_text(encoding="utf-8")
    multi = text.startswith("sample_id,labels")
    truth = load_labels(truth_path, C if multi else C + 1)
    return metrics.evaluate(pred, truth, open_threshold if not multi else None, K)


# -------------------------------------------------------------- end to end


@contextmanager
def thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(value)):
        yield


class _Stages:
    def __init__(self):
        self.timings = {}
        self.info = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        log.info("stage %s", name)
        try:
            yield
        except VSGraphError as exc:
            if isinstance(exc, StageError):
                raise
            raise StageError(name, exc) from exc
        except (OSError, ValueError, ArithmeticError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - start


def artifact_paths(out: Path) -> dict:
    return {
        "graph": out / "graph.vsgg",
        "operator": out / "operator.vsgg",
        "enhanced": out / "enhanced_metadata.vsgm",
        "anchors": out / "anchors.csv",
        "model": out / "model",
        "p_g": out / "p_g.vsgm",
        "p_f": out / "p_f.vsgm",
        "p_f_top": out / "p_f_top5.csv",
        "history": out / "rounds.jsonl",
        "report": out / "run_report.json",
    }


def run_pipeline(config: RunConfig) -> dict:
    """Graph, enhanced text, anchors, GNN, GNN labels, final labels; returns the report."""
    if config.manifest is None:
        raise ConfigError("run config has no manifest")
    manifest = load_manifest(config.manifest)
    if manifest.cnn_labels is None:
        raise ConfigError("manifest has no cnn_labels (p_c) entry")
    try:
        manifest.validate()
    except VSGraphError as exc:
        raise ConfigError(str(exc)) from exc

    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = artifact_paths(out)
    C = manifest.class_count
    gt = manifest.ground_truth
    st = _Stages()

    with thread_limit():
        with st.stage("build-graph"):
            st.info["graph"] = build_graph(manifest.features, paths["graph"], paths["operator"],
                                           config.k, config.w)
        with st.stage("enhance-text"):
            enhance_text(paths["operator"], manifest.metadata_embeddings, paths["enhanced"])
        with st.stage("select-anchors"):
            st.info["anchors"] = select_anchors(paths["enhanced"], manifest.label_descriptions,
                                                manifest.labels, C, config.m, paths["anchors"], gt)
        if config.rounds == 1:
            with st.stage("train-gnn"):
                st.info["training"] = train_gnn(paths["operator"], manifest.features,
                                                paths["anchors"], C, paths["model"],
                                                config.layers, config.train)
            with st.stage("label"):
                st.info["gnn_labels"] = label(paths["model"], paths["operator"],
                                              manifest.features, paths["p_g"])
        else:
            with st.stage("progressive"):
                st.info["progressive"] = progressive(
                    paths["operator"], manifest.features, paths["anchors"], C, paths["p_g"],
                    paths["history"], config.rounds, config.tau_f, config.layers, config.train,
                    gt, paths["model"])
        with st.stage("combine"):
            st.info["final_labels"] = combine(paths["p_g"], manifest.cnn_labels, paths["p_f"],
                                              config.lam, config.tau_f, paths["p_f_top"])
        if gt is not None:
            with st.stage("evaluate"):
                st.info["evaluation"] = {
                    name: evaluate(paths[name], gt).to_json() for name in ("p_g", "p_f")
                }
                st.info["evaluation"]["p_c"] = evaluate(manifest.cnn_labels, gt).to_json()

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config.to_json(),
        "timings_s": st.timings,
        **st.info,
        "artifacts": {k: str(v) for k, v in paths.items()},
    }
    paths["report"].write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report
