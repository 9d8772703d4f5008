"""Write the synthetic UART with one injected Trojan, plus its ground-truth sidecar.

    python3 scripts/make_suspect.py --kind comb --triggers 5 --seed 99 --out demo/
"""

import argparse
import json
import warnings
from pathlib import Path

from trojanscope.benchmarks import uart
from trojanscope.injector import InjectorConfig, generate_one
from trojanscope.netlist import emit_netlist


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--kind", choices=("comb", "seq"), default="comb")
    ap.add_argument("--triggers", type=int, default=5)
    ap.add_argument("--seed", type=int, default=99)
    ap.add_argument("--out", default="demo")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        infected, ht = generate_one(uart(), args.kind, args.triggers, args.seed,
                                    cfg=InjectorConfig(prefix="ht_"))
    (out / "suspect.v").write_text(emit_netlist(infected))
    (out / "truth.json").write_text(json.dumps(ht.sidecar(), indent=1))
    (out / "clean.v").write_text(emit_netlist(uart()))
    print(f"wrote {out}/suspect.v ({len(ht.trojan_nets)} Trojan nets), truth.json, clean.v")


if __name__ == "__main__":
    main()
