"""Generate a noisy synthetic dataset, run the full pipeline and score it.

    python scripts/run_synthetic_benchmark.py --out runs/bench --seed 42
"""

import argparse
import json
from pathlib import Path

from vsgraph.anchors import load_anchors
from vsgraph.datastore import load_matrix
from vsgraph.metrics import openset_prf
from vsgraph.pipeline import RunConfig, run_pipeline
from vsgraph.synth import SynthConfig, generate, oracle_report, write_bundle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--classes", type=int, default=20)
    ap.add_argument("--visual-spread", type=float, default=0.3)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--m", type=int, default=10)
    args = ap.parse_args()

    out = Path(args.out)
    bundle = generate(SynthConfig(samples=args.samples, classes=args.classes,
                                  visual_spread=args.visual_spread, seed=args.seed))
    manifest = write_bundle(bundle, out / "data")
    report = run_pipeline(RunConfig(manifest=manifest, output=out / "run", k=args.k, m=args.m))

    run = out / "run"
    p_g, p_f = load_matrix(run / "p_g.vsgm"), load_matrix(run / "p_f.vsgm")
    summary = {
        "p_f": oracle_report(bundle, p_f, load_anchors(run / "anchors.csv")),
        "p_g": oracle_report(bundle, p_g),
        "p_c": oracle_report(bundle, bundle.cnn_labels),
        "open_set_c_f1": {
            name: openset_prf(p, bundle.ground_truth, 0.2).f1
            for name, p in (("p_g", p_g), ("p_f", p_f), ("p_c", bundle.cnn_labels))
        },
        "timings_s": report["timings_s"],
    }
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
