"""Forward feature selection on every training set of a design.

Prints the features chosen per (class, trigger count) and the top-k
aggregate that the verification flow would train on.

    python3 scripts/feature_selection.py --instances 50 --rows 300
"""

import argparse
import json
import time

from trojanscope.benchmarks import uart
from trojanscope.config import RunConfig, derive_seed
from trojanscope.dataset import aggregate_top_features, forward_feature_selection
from trojanscope.hypergraph import build_hypergraph
from trojanscope.pipeline import dataset_stage, inject_stage, model_key, quiet_features


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--rows", type=int, default=300, help="stratified subsample per dataset (0 = all)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="JSON file for selections and CV histories")
    args = ap.parse_args()
    cfg = RunConfig(instances=args.instances, seed=args.seed,
                    selection_rows=args.rows or None)
    design = uart()
    table = quiet_features(build_hypergraph(design))
    picks, record = [], {}
    for kind in cfg.classes:
        for count in cfg.trigger_counts:
            key = model_key(kind, count)
            t0 = time.perf_counter()
            d = dataset_stage(table, inject_stage(design, cfg, kind, count))
            sel = forward_feature_selection(d, cfg.seed_features, cfg.cv_folds,
                                            seed=derive_seed(cfg.seed, "select", key),
                                            max_rows=cfg.selection_rows)
            picks.append(sel)
            record[key] = {"selected": sel, "history": d.metadata["selection_history"],
                           "counts": d.counts}
            best = d.metadata["selection_history"][-1][1]
            print(f"{key:8s} {d.counts}  CV F1 {best:.3f}  {sel}  ({time.perf_counter() - t0:.1f}s)")
    top = aggregate_top_features(picks, cfg.top_k)
    print(f"top-{cfg.top_k}: {top}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"per_dataset": record, "top": top}, fh, indent=1)


if __name__ == "__main__":
    main()
