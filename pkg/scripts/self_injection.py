"""Self-injection experiment on the synthetic UART benchmark.

    python3 scripts/self_injection.py --runs 10 --kinds comb --out results/self_injection.json
"""

import argparse
import json
import time
from pathlib import Path

from trojanscope.benchmarks import uart
from trojanscope.config import RunConfig
from trojanscope.experiments import self_injection_suite, suite_reduction


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kinds", default="comb", help="comma-separated held-out classes, cycled")
    ap.add_argument("--features", help="fixed feature list; default selects on the first run")
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--out", help="JSON results file")
    args = ap.parse_args()
    base = RunConfig(instances=args.instances,
                     features=args.features.split(",") if args.features else None)
    t0 = time.perf_counter()
    res = self_injection_suite(uart, args.runs, master_seed=args.seed,
                               kinds=args.kinds.split(","), base=base, log=print)
    ok = sum(o.recall >= 0.7 and o.fsa_fp < o.pooled_ml_fp for o in res)
    print(f"features: {res[0].features}")
    print(f"runs with recall >= 0.7 and FSA FP < pooled ML FP: {ok}/{len(res)}")
    print(f"FP reduction: {suite_reduction(res)}; total {time.perf_counter() - t0:.0f}s")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps([o.to_json() for o in res], indent=1))


if __name__ == "__main__":
    main()
