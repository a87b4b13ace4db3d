"""Correcting noisy web labels with metadata anchors and graph label propagation."""

from .anchors import (
    AnchorSet,
    enhance_metadata,
    multi_label_anchor_sets,
    score_all_labels,
    score_anchors,
    select_anchors,
)
from .correct import BlendConfig, combine, progressive_anchors, progressive_train, soft_cross_entropy
from .datastore import DatasetManifest, load_labels, load_manifest, load_matrix, save_labels, save_matrix
from .graph import PropagationOperator, SparseGraph, knn_graph, normalize, propagate
from .metrics import (
    EvalReport,
    mean_average_precision,
    multilabel_f1,
    openset_prf,
    topk_accuracy,
)
from .sgc import SgcModel, TrainConfig, infer, smooth_features, train

__version__ = "0.1.0"
