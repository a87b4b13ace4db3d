"""Command line entry point: ``vsgraph <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline as pl
from .errors import ArgumentError, ConfigError, VSGraphError
from .sgc import TrainConfig
from .synth import SynthConfig, generate, write_bundle

log = logging.getLogger("vsgraph")


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def unit_float(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def open_unit_float(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _train_flags(p, defaults=True):
    d = TrainConfig() if defaults else None
    p.add_argument("--lr", type=float, default=d and d.learning_rate, help="learning rate")
    p.add_argument("--epochs", type=positive_int, default=d and d.epochs)
    p.add_argument("--weight-decay", type=nonneg_float, default=d and d.weight_decay)
    p.add_argument("--seed", type=int, default=d and d.seed)


def _train_config(args, base=TrainConfig()):
    updates = {k: v for k, v in {
        "learning_rate": args.lr, "epochs": args.epochs,
        "weight_decay": args.weight_decay, "seed": args.seed,
    }.items() if v is not None}
    return replace(base, **updates)


def build_parser():
    parser = argparse.ArgumentParser(prog="vsgraph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("pipeline", help="run every stage from a manifest")
    p.add_argument("--manifest")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=positive_int)
    p.add_argument("--w", type=nonneg_float)
    p.add_argument("--m", type=positive_int)
    p.add_argument("--layers", type=positive_int)
    p.add_argument("--lam", type=unit_float)
    p.add_argument("--tau-f", type=open_unit_float)
    p.add_argument("--rounds", type=positive_int)
    _train_flags(p, defaults=False)

    p = sub.add_parser("build-graph", help="cosine kNN graph and propagation operator")
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=positive_int, default=5)
    p.add_argument("--w", type=nonneg_float, default=0.0)
    p.add_argument("--graph", default="graph.vsgg")
    p.add_argument("--operator", default="operator.vsgg")

    p = sub.add_parser("enhance-text", help="graph-smoothed metadata embeddings")
    p.add_argument("--operator", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--out", default="enhanced_metadata.vsgm")

    p = sub.add_parser("select-anchors", help="per-class anchors from metadata similarity")
    p.add_argument("--enhanced", required=True)
    p.add_argument("--descriptions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--class-count", type=positive_int, required=True)
    p.add_argument("--m", type=positive_int, default=10)
    p.add_argument("--ground-truth")
    p.add_argument("--out", default="anchors.csv")

    for name, helptext in (("train-gnn", "train the SGC on anchors"),
                           ("progressive", "progressive SGC rounds on a fixed graph")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--operator", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--anchors", required=True)
        p.add_argument("--class-count", type=positive_int, required=True)
        p.add_argument("--layers", type=positive_int, default=1)
        _train_flags(p)
        if name == "train-gnn":
            p.add_argument("--out", default="model", help="model directory")
        else:
            p.add_argument("--rounds", type=positive_int, default=3)
            p.add_argument("--tau-f", type=open_unit_float, default=0.7)
            p.add_argument("--ground-truth")
            p.add_argument("--model", help="directory for the last round's model")
            p.add_argument("--out", default="p_g.vsgm")
            p.add_argument("--history", default="rounds.jsonl")

    p = sub.add_parser("label", help="GNN labels for every sample")
    p.add_argument("--model", required=True)
    p.add_argument("--operator", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default="p_g.vsgm")

    p = sub.add_parser("combine", help="blend GNN and CNN labels into final labels")
    p.add_argument("--p-g", required=True)
    p.add_argument("--p-c", required=True)
    p.add_argument("--lam", type=unit_float, default=0.5)
    p.add_argument("--tau-f", type=open_unit_float, default=0.7)
    p.add_argument("--top-csv")
    p.add_argument("--out", default="p_f.vsgm")

    p = sub.add_parser("evaluate", help="metrics for a prediction matrix")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--open-threshold", type=open_unit_float, default=0.2)
    p.add_argument("--top-labels", type=positive_int, default=3, help="K for multi-label F1")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--out")

    p = sub.add_parser("synth", help="write a synthetic noisy dataset")
    d = SynthConfig()
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--samples", type=positive_int, default=d.samples)
    p.add_argument("--classes", type=positive_int, default=d.classes)
    p.add_argument("--ood", type=int, default=d.ood_concepts)
    p.add_argument("--feature-dim", type=positive_int, default=d.feature_dim)
    p.add_argument("--text-dim", type=positive_int, default=d.text_dim)
    p.add_argument("--noise-rate", type=unit_float, default=d.noise_rate)
    p.add_argument("--majority-noise-rate", type=unit_float, default=d.majority_noise_rate)
    p.add_argument("--majority-fraction", type=unit_float, default=d.majority_fraction)
    p.add_argument("--visual-spread", type=nonneg_float, default=d.visual_spread)
    p.add_argument("--text-spread", type=nonneg_float, default=d.text_spread)
    p.add_argument("--corruption", type=unit_float, default=d.metadata_corruption)
    return parser


def _run_config(args):
    overrides = {"manifest": args.manifest, "output": args.out, "k": args.k, "w": args.w,
                 "m": args.m, "layers": args.layers, "lam": args.lam, "tau_f": args.tau_f,
                 "rounds": args.rounds}
    if args.config:
        cfg = pl.RunConfig.from_json(args.config, **overrides)
    else:
        cfg = pl.RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    return replace(cfg, train=_train_config(args, cfg.train))


def dispatch(args):
    c = args.command
    if c == "pipeline":
        return pl.run_pipeline(_run_config(args))
    if c == "build-graph":
        return pl.build_graph(args.features, args.graph, args.operator, args.k, args.w)
    if c == "enhance-text":
        return pl.enhance_text(args.operator, args.metadata, args.out)
    if c == "select-anchors":
        return pl.select_anchors(args.enhanced, args.descriptions, args.labels, args.class_count,
                                 args.m, args.out, args.ground_truth)
    if c == "train-gnn":
        return pl.train_gnn(args.operator, args.features, args.anchors, args.class_count,
                            args.out, args.layers, _train_config(args))
    if c == "progressive":
        return pl.progressive(args.operator, args.features, args.anchors, args.class_count,
                              args.out, args.history, args.rounds, args.tau_f, args.layers,
                              _train_config(args), args.ground_truth, args.model)
    if c == "label":
        return pl.label(args.model, args.operator, args.features, args.out)
    if c == "combine":
        return pl.combine(args.p_g, args.p_c, args.out, args.lam, args.tau_f, args.top_csv)
    if c == "evaluate":
        report = pl.evaluate(args.pred, args.truth, args.open_threshold, args.top_labels)
        if args.out:
            Path(args.out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
        return report
    if c == "synth":
        cfg = SynthConfig(samples=args.samples, classes=args.classes, ood_concepts=args.ood,
                          feature_dim=args.feature_dim, text_dim=args.text_dim,
                          noise_rate=args.noise_rate, majority_noise_rate=args.majority_noise_rate,
                          majority_fraction=args.majority_fraction,
                          visual_spread=args.visual_spread, text_spread=args.text_spread,
                          metadata_corruption=args.corruption, seed=args.seed)
        return {"manifest": str(write_bundle(generate(cfg), args.out))}
    raise ArgumentError(f"unknown command {c}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = dispatch(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"vsgraph {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (VSGraphError, OSError) as exc:
        print(f"vsgraph {args.command}: {exc}", file=sys.stderr)
        return 1
    if args.command == "evaluate" and args.format == "table":
        print(result.table())
    elif hasattr(result, "to_json"):
        print(json.dumps(result.to_json(), indent=2))
    elif args.command == "pipeline":
        print(json.dumps({"report": result["artifacts"]["report"],
                          "p_f": result["artifacts"]["p_f"]}, indent=2))
    else:
        print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
