"""Self-injection experiments: hide a known Trojan, run the full flow, score the result."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from .config import RunConfig, derive_seed
from .injector import COMB, InjectorConfig, generate_one
from .netlist import Netlist
from .pipeline import verify
from .postproc import FSA, ML, STAGES, fp_reduction

HELD_OUT_PREFIX = "ht_"


@dataclass
class RunOutcome:
    run: int
    kind: str
    trigger_count: int
    trojan_nets: int
    held_out_seed: int
    features: list[str]
    stages: dict[str, dict[str, int]]      # voted tp/fp/fn per stage
    pooled_ml_fp: int                      # FPs among nets flagged by any model before pruning
    model_ml_fp: int                       # summed over models, before pruning
    model_fsa_fp: int                      # summed over models, after pruning
    kkt_gaps: list[float]
    nested: bool
    seconds: float
    per_model: list[dict] = field(default_factory=list)

    @property
    def recall(self) -> float:
        return self.stages[FSA]["tp"] / self.trojan_nets if self.trojan_nets else 0.0

    @property
    def fsa_fp(self) -> int:
        return self.stages[FSA]["fp"]

    @property
    def voted_ml_fp(self) -> int:
        return self.stages[ML]["fp"]

    def to_json(self) -> dict:
        d = asdict(self)
        d["recall"] = self.recall
        return d


def held_out_trojan(design: Netlist, kind: str, count: int, seed: int):
    """Insert the Trojan the flow must find; its names never collide with training Trojans."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return generate_one(design, kind, count, seed, cfg=InjectorConfig(prefix=HELD_OUT_PREFIX))


def self_injection_run(design: Netlist, run: int, cfg: RunConfig, *, kind: str = COMB,
                       trigger_count: int = 5) -> RunOutcome:
    start = time.perf_counter()
    ht_seed = derive_seed(cfg.seed, "held-out", run)
    suspect, ht = held_out_trojan(design, kind, trigger_count, ht_seed)
    truth = set(ht.trojan_nets)
    res = verify(suspect, cfg, None, sorted(truth))
    rep = res.report
    flagged = set().union(*(p.trojan_nets() for p in res.predictions))
    per_model = [{"model": m["model"], **{s: {k: m["stages"][s][k] for k in ("tp", "fp", "fn")}
                                          for s in STAGES}} for m in rep["models"]]
    nested = all(len(st[FSA]["nets"]) <= len(st["gca"]["nets"]) <= len(st["nca"]["nets"])
                 <= len(st[ML]["nets"]) for st in [rep["stages"]] + [m["stages"] for m in rep["models"]])
    return RunOutcome(
        run=run, kind=kind, trigger_count=trigger_count, trojan_nets=len(truth), held_out_seed=ht_seed,
        features=list(res.features),
        stages={s: {k: rep["stages"][s][k] for k in ("tp", "fp", "fn")} for s in STAGES},
        pooled_ml_fp=len(flagged - truth),
        model_ml_fp=sum(m[ML]["fp"] for m in per_model),
        model_fsa_fp=sum(m[FSA]["fp"] for m in per_model),
        kkt_gaps=[m.kkt_gap for m in res.models], nested=nested,
        seconds=time.perf_counter() - start, per_model=per_model)


def self_injection_suite(design_factory: Callable[[], Netlist], runs: int = 10, *,
                         master_seed: int = 0, kinds: Sequence[str] = (COMB,),
                         trigger_counts: Sequence[int] = (5, 6, 8), base: RunConfig | None = None,
                         select_once: bool = True, log: Callable[[str], None] | None = None
                         ) -> list[RunOutcome]:
    """``runs`` independent held-out Trojans, cycling through ``kinds`` and ``trigger_counts``.

    With ``select_once`` the first run performs forward feature selection and
    later runs reuse its feature list, which keeps the suite within minutes.
    """
    base = base or RunConfig()
    design = design_factory()
    features = base.features
    out = []
    for r in range(runs):
        cfg = RunConfig.from_mapping({**base.to_json(), "seed": master_seed + r,
                                      "features": features})
        o = self_injection_run(design, r, cfg, kind=kinds[r % len(kinds)],
                               trigger_count=trigger_counts[r % len(trigger_counts)])
        if select_once and features is None:
            features = o.features
        out.append(o)
        if log:
            log(f"run {r}: {o.kind}/{o.trigger_count} |T|={o.trojan_nets} recall={o.recall:.2f} "
                f"ML fp voted={o.voted_ml_fp} pooled={o.pooled_ml_fp} FSA fp={o.fsa_fp} "
                f"({o.seconds:.1f}s)")
    return out


def suite_reduction(outcomes: Sequence[RunOutcome]) -> dict[str, float]:
    """Aggregate FP reduction from the ML stage to FSA, voted and per model."""
    return {
        "voted": fp_reduction(sum(o.voted_ml_fp for o in outcomes), sum(o.fsa_fp for o in outcomes)),
        "per_model": fp_reduction(sum(o.model_ml_fp for o in outcomes),
                                  sum(o.model_fsa_fp for o in outcomes)),
    }
