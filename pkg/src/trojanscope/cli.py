"""Command-line entry point: one subcommand per stage plus ``verify`` and ``evaluate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classifier import TrainedModel, majority_vote
from .config import RunConfig, derive_seed
from .dataset import dataset_csv, fit_scaler, manifest
from .errors import ConfigError, LibraryError, ParseError, TrojanScopeError
from .hypergraph import build_hypergraph
from .injector import TrojanInstance, TriggerSpec
from .library import CellLibrary
from .netlist import read_netlist
from .pipeline import (classify_stage, dataset_stage, dumps, inject_stage, load_design, metrics_table,
                       model_key, postprocess_stage, predictions_from_json, predictions_json,
                       quiet_features, read_ground_truth, selection_stage, thresholds_for,
                       to_dot, train_stage, verify)

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_STAGE = 0, 2, 3, 4
log = logging.getLogger("trojanscope")


def _sweep(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LOW:HIGH, e.g. 1e-4:1e-1") from None
    return lo, hi


def _common(p: argparse.ArgumentParser, netlist: bool = True) -> None:
    p.add_argument("--config", help="JSON run configuration")
    if netlist:
        p.add_argument("--netlist", help="structural Verilog of the suspect design")
    p.add_argument("--library", help="cell library JSON (default: built-in library)")
    p.add_argument("--clock", action="append", dest="clocks", help="clock net (repeatable)")
    p.add_argument("--reset", action="append", dest="resets", help="reset net (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trojanscope",
                                 description="Golden-free hardware Trojan detection on gate-level netlists")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-features", help="per-net feature table (CSV)")
    _common(p)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("inject", help="generate Trojan-inserted training variants")
    _common(p)
    p.add_argument("--class", dest="kind", choices=("comb", "seq"), required=True)
    p.add_argument("--triggers", type=int, required=True)
    p.add_argument("--instances", type=int)
    p.add_argument("--threshold-sweep", type=_sweep)
    p.add_argument("--output", help="run directory (instances/ is created inside)")

    p = sub.add_parser("train", help="build a dataset from persisted instances and train one SVM")
    _common(p)
    p.add_argument("--class", dest="kind", choices=("comb", "seq"), required=True)
    p.add_argument("--triggers", type=int, required=True)
    p.add_argument("--features", help="comma-separated feature list (default: forward selection)")
    p.add_argument("--output", help="run directory holding instances/")

    p = sub.add_parser("classify", help="apply trained models to the suspect design")
    _common(p)
    p.add_argument("--model", action="append", required=True, help="model JSON (repeatable)")
    p.add_argument("--out", required=True, help="predictions JSON")

    p = sub.add_parser("postprocess", help="NCA/GCA/FSA pruning of stored predictions")
    _common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--model", action="append", required=True, help="models (for FSA lambdas)")
    p.add_argument("--ground-truth")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--dot", help="optional Graphviz output")

    p = sub.add_parser("verify", help="full flow on one suspect design")
    _common(p)
    p.add_argument("--output", help="run directory")
    p.add_argument("--instances", type=int)
    p.add_argument("--features", help="comma-separated feature list (skips selection)")
    p.add_argument("--ground-truth")

    p = sub.add_parser("evaluate", help="FP/FN/TP table for a report")
    p.add_argument("--report", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", help="optional metrics JSON")
    return ap


def _config(args) -> RunConfig:
    over = {k: getattr(args, k, None) for k in ("netlist", "library", "clocks", "resets", "seed",
                                                 "instances", "output", "ground_truth")}
    if getattr(args, "features", None):
        over["features"] = [f.strip() for f in args.features.split(",") if f.strip()]
    sweep = getattr(args, "threshold_sweep", None)
    if sweep:
        over["threshold_min"], over["threshold_max"] = sweep
    return RunConfig.load(args.config, over)


def _suspect_table(cfg: RunConfig):
    n = load_design(cfg)
    h = build_hypergraph(n)
    return n, h, quiet_features(h)


def cmd_extract(args) -> int:
    cfg = _config(args)
    _, _, table = _suspect_table(cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(table.to_csv())
    print(f"{len(table)} nets, {len(table.columns)} features -> {args.out}")
    return EXIT_OK


def cmd_inject(args) -> int:
    cfg = _config(args)
    n = load_design(cfg)
    out = Path(cfg.output)
    variants = inject_stage(n, cfg, args.kind, args.triggers, out)
    print(f"{len(variants)} instances -> {out / 'instances' / model_key(args.kind, args.triggers)}")
    return EXIT_OK


def _load_instances(cfg: RunConfig, kind: str, count: int):
    lib = CellLibrary.load(cfg.library) if cfg.library else CellLibrary.default()
    d = Path(cfg.output) / "instances" / model_key(kind, count)
    if not d.is_dir():
        raise ConfigError(f"no instances at {d}; run `inject` first")
    out = []
    for side in sorted(d.glob("*.json")):
        rec = json.loads(side.read_text())
        n = read_netlist(side.with_suffix(".v"), lib, clocks=cfg.clocks, resets=cfg.resets)
        trig = TriggerSpec(len(rec["trigger_nets"]), rec["rarity_threshold"],
                           tuple((a, int(b)) for a, b in rec["trigger_nets"]))
        troj = TrojanInstance(rec["kind"], trig, rec["payload_net"], (), tuple(rec["trojan_nets"]),
                              rec["output_net"], rec.get("seq_params"), rec.get("witness"))
        out.append((n, troj))
    return out


def cmd_train(args) -> int:
    cfg = _config(args)
    n, _, table = _suspect_table(cfg)
    variants = _load_instances(cfg, args.kind, args.triggers)
    d = dataset_stage(table, variants, n.name)
    key = model_key(args.kind, args.triggers)
    features = selection_stage({key: d}, cfg)
    meta = {"class": args.kind, "trigger_count": args.triggers, "features": features,
            "seed": derive_seed(cfg.seed, "inject", args.kind, args.triggers)}
    m = train_stage(d, features, cfg, meta)
    out = Path(cfg.output)
    scaler = fit_scaler(d)
    (out / "datasets").mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "datasets" / f"{key}.csv").write_text(dataset_csv(d, scaler))
    (out / "datasets" / f"{key}.json").write_text(manifest(d, scaler, features,
                                                           {"master": cfg.seed}))
    (out / "models" / f"{key}.json").write_text(m.dumps() + "\n")
    print(f"model {key}: features {features}, {d.counts}, KKT gap {m.kkt_gap:.2e}")
    return EXIT_OK


def _models(paths) -> list[TrainedModel]:
    return [TrainedModel.from_json(json.loads(Path(p).read_text())) for p in paths]


def cmd_classify(args) -> int:
    cfg = _config(args)
    _, _, table = _suspect_table(cfg)
    preds = classify_stage(_models(args.model), table)
    Path(args.out).write_text(dumps(predictions_json(preds)))
    print(f"{len(majority_vote(preds).trojan_nets())} nets voted Trojan -> {args.out}")
    return EXIT_OK


def cmd_postprocess(args) -> int:
    cfg = _config(args)
    _, h, table = _suspect_table(cfg)
    preds = predictions_from_json(json.loads(Path(args.predictions).read_text()))
    if preds and preds[0].nets != table.nets:
        from .errors import NetUniverseMismatch
        raise NetUniverseMismatch("predictions were made on a different net set")
    models = _models(args.model)
    truth = read_ground_truth(args.ground_truth) if args.ground_truth else None
    report, stages = postprocess_stage(h, table, preds, thresholds_for(models, cfg), cfg, truth)
    Path(args.out).write_text(dumps(report))
    if args.dot:
        Path(args.dot).write_text(to_dot(h, stages))
    print(f"FSA stage keeps {len(stages['fsa'].nets)} nets -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    n = load_design(cfg)
    truth = read_ground_truth(cfg.ground_truth) if cfg.ground_truth else None
    res = verify(n, cfg, Path(cfg.output), truth)
    print(f"report -> {Path(cfg.output) / 'reports' / 'report.json'}")
    if truth is not None:
        _, text = metrics_table(res.report, truth)
        print(text, end="")
    else:
        print(f"FSA stage keeps {len(res.stages['fsa'].nets)} nets")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    report = json.loads(Path(args.report).read_text())
    truth = read_ground_truth(args.ground_truth)
    rows, text = metrics_table(report, truth)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(dumps(rows))
    return EXIT_OK


COMMANDS = {
    "extract-features": cmd_extract, "inject": cmd_inject, "train": cmd_train,
    "classify": cmd_classify, "postprocess": cmd_postprocess, "verify": cmd_verify,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, LibraryError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TrojanScopeError as exc:
        stage = f" [{exc.stage}]" if exc.stage else ""
        print(f"error{stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
