"""Sensitivity of final-label accuracy to k, tau_f and lambda on one bundle.

The GNN is trained once per k; tau_f and lambda only change the blend.
"""

import argparse
import itertools

import numpy as np

from vsgraph.anchors import enhance_metadata, score_anchors, select_anchors
from vsgraph.correct import BlendConfig, combine
from vsgraph.graph import knn_graph, normalize
from vsgraph.metrics import openset_prf
from vsgraph.sgc import TrainConfig, infer, smooth_features, train
from vsgraph.synth import SynthConfig, generate, oracle_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", type=int, nargs="+", default=[3, 5, 10, 20])
    ap.add_argument("--taus", type=float, nargs="+", default=[0.5, 0.7, 0.9])
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    b = generate(SynthConfig(seed=args.seed))
    p_c = b.cnn_labels.astype(np.float64)
    print(f"web-label accuracy {oracle_report(b, p_c)['web_label_accuracy']:.4f}")
    print(f"{'k':>3}  {'tau_f':>5}  {'lam':>4}  {'accuracy':>8}  {'open C-F1':>9}")
    for k in args.ks:
        op = normalize(knn_graph(b.features, k), 0.0)
        scores = score_anchors(enhance_metadata(op, b.metadata), b.label_descriptions, b.web_labels)
        anchors = select_anchors(scores, b.web_labels, 10, b.class_count)
        x = smooth_features(op, b.features, 1)
        p_g = infer(train(x, anchors, b.class_count, TrainConfig()), x)
        for tau, lam in itertools.product(args.taus, args.lams):
            p_f = combine(p_g, p_c, BlendConfig(lam, tau))
            acc = oracle_report(b, p_f)["accuracy"]
            f1 = openset_prf(p_f, b.ground_truth, 0.2).f1
            print(f"{k:3d}  {tau:5.2f}  {lam:4.2f}  {acc:8.4f}  {f1:9.4f}")


if __name__ == "__main__":
    main()
