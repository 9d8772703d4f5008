"""End-to-end verification flow and the artifact layout shared by the CLI stages.

Layout under the output directory::

    config.json                      effective configuration (with seeds)
    features/suspect.csv             features of the design under test
    instances/<class>_<k>/NNN.v      Trojan-inserted variants
    instances/<class>_<k>/NNN.json   insertion record (labels, witness)
    datasets/<class>_<k>.csv         scaled labeled rows
    datasets/<class>_<k>.json        manifest: scaler, label counts, seeds
    models/<class>_<k>.json          trained SVM
    reports/predictions.json         per-model and voted decisions
    reports/report.json              post-processing report
    reports/trojan.dot, trojan.v     reconstructed circuit
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classifier import PredictionSet, TrainedModel, majority_vote, predict, train_svm
from .config import RunConfig, derive_seed
from .dataset import (LabeledDataset, MinMaxScaler, aggregate_top_features, build_dataset,
                      dataset_csv, fit_scaler, forward_feature_selection, manifest)
from .errors import NetUniverseMismatch, TrojanScopeError, Untrainable
from .features import FeatureTable, extract_features
from .hypergraph import Hypergraph, build_hypergraph
from .injector import InjectorConfig, TrojanInstance, generate_training_set
from .library import CellLibrary
from .netlist import Netlist, emit_netlist, read_netlist
from .postproc import (FSA, ML, STAGES, FsaThresholds, SuspectSubgraph, fp_reduction,
                       free_net_lambdas, netlist_fragment, profiles_from_features,
                       check_containment, reconstruct_report, run_stages, stage_metrics,
                       to_dot, vote_stage)

log = logging.getLogger(__name__)


def model_key(kind: str, count: int) -> str:
    return f"{kind}_{count}"


def dumps(obj) -> str:
    """Canonical JSON used for every persisted artifact."""
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def staged(stage: str):
    """Tag TrojanScope errors raised inside a stage with the stage name."""
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except TrojanScopeError as exc:
                if exc.stage is None:
                    exc.stage = stage
                raise
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def quiet_features(h: Hypergraph) -> FeatureTable:
    """Feature extraction with the non-convergence warning folded into the table flag."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return extract_features(h)


def load_design(cfg: RunConfig) -> Netlist:
    lib = CellLibrary.load(cfg.library) if cfg.library else CellLibrary.default()
    if not cfg.netlist:
        from .errors import ConfigError
        raise ConfigError("no netlist given")
    return read_netlist(cfg.netlist, lib, clocks=cfg.clocks, resets=cfg.resets)


# -- stages ---------------------------------------------------------------------

@staged("inject")
def inject_stage(suspect: Netlist, cfg: RunConfig, kind: str, count: int,
                 out: Path | None = None) -> list[tuple[Netlist, TrojanInstance]]:
    if cfg.instances == 0:
        return []
    icfg = InjectorConfig(thresholds=cfg.thresholds())
    seed = derive_seed(cfg.seed, "inject", kind, count)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        variants = generate_training_set(suspect, kind, count, cfg.instances, seed, icfg)
    if out is not None:
        d = out / "instances" / model_key(kind, count)
        for i, (n, troj) in enumerate(variants):
            _write(d / f"{i:03d}.v", emit_netlist(n))
            _write(d / f"{i:03d}.json", dumps(troj.sidecar()))
    return variants


@staged("dataset")
def dataset_stage(suspect_features: FeatureTable,
                  variants: Sequence[tuple[Netlist | FeatureTable, TrojanInstance]],
                  design: str = "suspect") -> LabeledDataset:
    tables = []
    for n, troj in variants:
        table = n if isinstance(n, FeatureTable) else quiet_features(build_hypergraph(n))
        tables.append((table, troj))
    d = build_dataset(suspect_features, tables, design)
    return d.require_trainable()


@staged("select")
def selection_stage(datasets: Mapping[str, LabeledDataset], cfg: RunConfig) -> list[str]:
    if cfg.features:
        return list(cfg.features)
    picks = []
    for key in sorted(datasets):
        picks.append(forward_feature_selection(
            datasets[key], cfg.seed_features, cfg.cv_folds,
            seed=derive_seed(cfg.seed, "select", key), C=cfg.svm_c,
            max_rows=cfg.selection_rows))
    return aggregate_top_features(picks, cfg.top_k)


@staged("train")
def train_stage(d: LabeledDataset, features: Sequence[str], cfg: RunConfig,
                metadata: Mapping) -> TrainedModel:
    scaler = fit_scaler(d).subset(features)
    x = scaler.transform(d.select(features))
    normal = d.y == 0
    lam_cc, lam_sc = free_net_lambdas(*(d.select([c])[normal, 0]
                                        for c in ("cc0_ns", "cc1_ns", "sc0_ns", "sc1_ns")))
    meta = dict(metadata)
    meta["lambda_cc"], meta["lambda_sc"] = lam_cc, lam_sc
    meta["label_counts"] = d.counts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = train_svm(x, d.y, list(features), C=cfg.svm_c, gamma=cfg.svm_gamma, eps=cfg.svm_tol,
                      metadata=meta)
    m.scaler = scaler.to_json()
    return m


@staged("classify")
def classify_stage(models: Sequence[TrainedModel], table: FeatureTable) -> list[PredictionSet]:
    preds = []
    for m in models:
        scaler = MinMaxScaler.from_json(m.scaler)
        x = scaler.transform(table.select(list(m.features)))
        preds.append(predict(m, table.nets, x))
    return preds


def thresholds_for(models: Sequence[TrainedModel], cfg: RunConfig) -> FsaThresholds:
    """FSA bounds from the config; lambda is averaged over the models' Free rows."""
    lam_cc = float(np.mean([m.metadata.get("lambda_cc", 0.0) for m in models])) if models else 0.0
    lam_sc = float(np.mean([m.metadata.get("lambda_sc", 0.0) for m in models])) if models else 0.0
    return FsaThresholds(cfg.theta_l, cfg.theta_u, cfg.theta_cc, cfg.theta_sc, lam_cc, lam_sc)


@staged("postprocess")
def postprocess_stage(h: Hypergraph, table: FeatureTable, preds: Sequence[PredictionSet],
                      thresholds: FsaThresholds, cfg: RunConfig,
                      ground_truth: Iterable[str] | None = None) -> tuple[dict, dict]:
    """Prune each model's flags, then vote stage by stage.

    Returns the report and the stages voted across every model. Votes within
    each Trojan class are reported too. Since every model's stages are nested,
    so are the voted ones.
    """
    profiles = profiles_from_features(table)
    truth = set(ground_truth) if ground_truth is not None else None
    per_model, runs = [], []
    for p in preds:
        st = run_stages(h, p.trojan_nets(), profiles, thresholds, cfg.theta_depth)
        runs.append((p.metadata.get("class"), st))
        row = {"model": model_key(p.metadata.get("class", "?"), p.metadata.get("trigger_count", 0)),
               "stages": {s: {"nets": st[s].sorted_nets()} for s in STAGES}}
        if truth is not None:
            for s in STAGES:
                row["stages"][s].update(stage_metrics(st[s].nets, truth))
        per_model.append(row)
    stages = vote_stages([st for _, st in runs])
    report = reconstruct_report(stages, truth, thresholds=thresholds, theta_depth=cfg.theta_depth)
    by_class = {}
    for kind in sorted({k for k, _ in runs if k}):
        vs = vote_stages([st for k, st in runs if k == kind])
        by_class[kind] = {s: {"nets": vs[s].sorted_nets(),
                              **(stage_metrics(vs[s].nets, truth) if truth is not None else {})}
                          for s in STAGES}
    report["by_class"] = by_class
    report["models"] = per_model
    report["design"] = h.netlist.name
    report["universe"] = list(table.nets)
    return report, stages


def vote_stages(runs: Sequence[Mapping[str, SuspectSubgraph]]) -> dict[str, SuspectSubgraph]:
    """Majority vote per stage; the circuit keeps model edges whose nets both survive."""
    out = {}
    for s in STAGES:
        nets = vote_stage([r[s].nets for r in runs])
        edges = frozenset(e for r in runs for e in r[s].edges if e[0] in nets and e[2] in nets)
        out[s] = SuspectSubgraph(nets, frozenset(c for _, c, _ in edges), edges, s)
    check_containment(out)
    return out


def read_ground_truth(path: str) -> list[str]:
    """Trojan net list from an insertion record (JSON) or a one-net-per-line text file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if isinstance(data, dict):
        return list(data["trojan_nets"])
    return list(data)


# -- full flow -------------------------------------------------------------------

@dataclass
class VerifyResult:
    report: dict
    stages: dict[str, SuspectSubgraph]
    models: list[TrainedModel]
    predictions: list[PredictionSet]
    features: list[str]


def verify(suspect: Netlist, cfg: RunConfig, out: Path | None = None,
           ground_truth: Iterable[str] | None = None) -> VerifyResult:
    """Extract, inject per class and trigger count, select, train, classify, vote, prune."""
    if out is not None:
        _write(out / "config.json", dumps(cfg.to_json()))
    h = build_hypergraph(suspect)
    table = quiet_features(h)
    if out is not None:
        _write(out / "features" / "suspect.csv", table.to_csv())

    datasets: dict[str, LabeledDataset] = {}
    meta: dict[str, dict] = {}
    for kind in cfg.classes:
        for count in cfg.trigger_counts:
            key = model_key(kind, count)
            log.info("building training set %s", key)
            variants = inject_stage(suspect, cfg, kind, count, out)
            if not variants:
                err = Untrainable(f"no training instances for {key}")
                err.stage = "dataset"
                raise err
            datasets[key] = dataset_stage(table, variants, suspect.name)
            meta[key] = {"class": kind, "trigger_count": count,
                         "seed": derive_seed(cfg.seed, "inject", kind, count)}

    features = selection_stage(datasets, cfg)
    models = []
    for key in sorted(datasets, key=lambda k: (cfg.classes.index(meta[k]["class"]),
                                               cfg.trigger_counts.index(meta[k]["trigger_count"]))):
        d = datasets[key]
        m = train_stage(d, features, cfg, {**meta[key], "features": features})
        models.append(m)
        if out is not None:
            scaler = fit_scaler(d)
            _write(out / "datasets" / f"{key}.csv", dataset_csv(d, scaler))
            _write(out / "datasets" / f"{key}.json",
                   manifest(d, scaler, features, {"master": cfg.seed, "inject": meta[key]["seed"]}))
            _write(out / "models" / f"{key}.json", m.dumps() + "\n")

    preds = classify_stage(models, table)
    thresholds = thresholds_for(models, cfg)
    report, stages = postprocess_stage(h, table, preds, thresholds, cfg, ground_truth)
    report["features"] = list(features)
    report["seed"] = cfg.seed
    if out is not None:
        _write(out / "reports" / "predictions.json", dumps(predictions_json(preds)))
        _write(out / "reports" / "report.json", dumps(report))
        _write(out / "reports" / "trojan.dot", to_dot(h, stages))
        if stages[FSA].nodes:
            _write(out / "reports" / "trojan.v", netlist_fragment(h, stages[FSA]))
    return VerifyResult(report, stages, models, preds, list(features))


def predictions_json(preds: Sequence[PredictionSet]) -> dict:
    voted = majority_vote(preds)
    return {
        "nets": list(voted.nets),
        "models": [{"metadata": p.metadata, "decision": [round(float(v), 12) for v in p.decision]}
                   for p in preds],
        "votes": voted.votes.tolist(),
        "voted_trojan": sorted(voted.trojan_nets()),
    }


def predictions_from_json(d: Mapping) -> list[PredictionSet]:
    return [PredictionSet(list(d["nets"]), np.array(m["decision"], float), dict(m["metadata"]))
            for m in d["models"]]


# -- evaluation table ------------------------------------------------------------

def metrics_table(report: Mapping, truth: Iterable[str]) -> tuple[list[dict], str]:
    """FP/FN/TP per model and stage plus the voted row, as records and aligned text."""
    truth = set(truth)
    universe = set(report.get("universe", ()))
    if universe and not truth <= universe:
        raise NetUniverseMismatch(f"ground-truth nets missing from the design: "
                                  f"{sorted(truth - universe)[:5]}")
    rows = []
    for m in report.get("models", []):
        rows.append({"model": m["model"],
                     **{s: stage_metrics(m["stages"][s]["nets"], truth) for s in STAGES}})
    rows.append({"model": "voted", **{s: stage_metrics(report["stages"][s]["nets"], truth)
                                      for s in STAGES}})
    header = f"{'model':<10}" + "".join(f"{s.upper() + ' FP':>9}{s.upper() + ' FN':>9}"
                                          for s in STAGES)
    lines = [header]
    for r in rows:
        cells = "".join(f"{r[s].get('fp', '-'):>9}{r[s].get('fn', '-'):>9}" for s in STAGES)
        lines.append(f"{r['model']:<10}{cells}")
    voted = rows[-1]
    lines.append(f"FP reduction ML->FSA: {fp_reduction(voted[ML]['fp'], voted[FSA]['fp']):.2f}%")
    return rows, "\n".join(lines) + "\n"

