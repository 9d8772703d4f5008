"""Pruning of ML-flagged nets into a reconstructed Trojan circuit.

Three stages run in order, each only removing:

* neighbour connectivity: drop flagged nets with no flagged net one cell away;
* gate connectivity: drop cells that sit on no chain of ``theta_depth`` cells;
* functional scoping: drop nets whose probability and no-scan controllability
  look like ordinary (Free) nets of the training data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingFeature, UnknownNet
from .hypergraph import Hypergraph
from .netlist import Netlist, emit_netlist

ML, NCA, GCA, FSA = "ml", "nca", "gca", "fsa"
STAGES = (ML, NCA, GCA, FSA)

Edge = tuple[str, str, str]  # (input net, cell, output net)


@dataclass(frozen=True)
class SuspectSubgraph:
    nets: frozenset[str]
    nodes: frozenset[str] = frozenset()
    edges: frozenset[Edge] = frozenset()
    stage: str = ML

    def sorted_nets(self) -> list[str]:
        return sorted(self.nets)


@dataclass(frozen=True)
class FsaThresholds:
    theta_l: float = 0.4
    theta_u: float = 0.6
    theta_cc: float = 0.0
    theta_sc: float = 0.0
    lambda_cc: float = 0.0
    lambda_sc: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta_l < self.theta_u <= 1.0:
            raise ValueError("need 0 <= theta_L < theta_U <= 1")
        if self.lambda_cc < 0 or self.lambda_sc < 0:
            raise ValueError("lambda values must be non-negative")


def free_net_lambdas(cc0: np.ndarray, cc1: np.ndarray, sc0: np.ndarray,
                     sc1: np.ndarray) -> tuple[float, float]:
    """Mean controllability norms over Free (Normal) training rows, in feature units."""
    cc = np.hypot(np.asarray(cc0, float), np.asarray(cc1, float))
    sc = np.hypot(np.asarray(sc0, float), np.asarray(sc1, float))
    return float(cc.mean()) if len(cc) else 0.0, float(sc.mean()) if len(sc) else 0.0


# -- stage 1 -----------------------------------------------------------------

def _inputs_of(h: Hypergraph, cell: str) -> list[str]:
    c = h.netlist.cell_map[cell]
    out = h.netlist.library[c.type].output
    return [net for pin, net in sorted(c.pins.items()) if pin != out]


def nca(h: Hypergraph, t_nets: Iterable[str]) -> SuspectSubgraph:
    """Keep flagged nets joined to another flagged net through a single cell."""
    flagged = set(t_nets)
    for net in flagged:
        if net not in h.index:
            raise UnknownNet(net)
    edges: set[Edge] = set()
    for net in sorted(flagged):
        for cell, _pin in h.sinks.get(net, ()):
            out = h.output_of(cell)
            if out in flagged:
                edges.add((net, cell, out))
        drv = h.driver.get(net)
        if drv is not None:
            for src in _inputs_of(h, drv):
                if src in flagged:
                    edges.add((src, drv, net))
    return _from_edges(edges, NCA)


def _from_edges(edges: Iterable[Edge], stage: str) -> SuspectSubgraph:
    edges = frozenset(edges)
    nets = frozenset(n for a, _, b in edges for n in (a, b))
    return SuspectSubgraph(nets, frozenset(c for _, c, _ in edges), edges, stage)


# -- stage 2 -----------------------------------------------------------------

def node_heights(nodes: Iterable[str], edges: Iterable[Edge], cap: int) -> tuple[dict, dict]:
    """Longest forward and backward chains (in cells, counting the cell itself), capped at ``cap``.

    The cap keeps the recurrence finite when flops close loops inside the
    subgraph; only comparisons against the depth threshold are needed.
    """
    nodes = sorted(set(nodes))
    outs: dict[str, set[str]] = {n: set() for n in nodes}
    ins: dict[str, set[str]] = {n: set() for n in nodes}
    for a, c, b in edges:
        outs[c].add(b)
        ins[c].add(a)
    readers: dict[str, set[str]] = {}
    for a, c, _ in edges:
        readers.setdefault(a, set()).add(c)
    succ = {n: sorted({m for net in outs[n] for m in readers.get(net, ())}) for n in nodes}
    pred: dict[str, list[str]] = {n: [] for n in nodes}
    for n in nodes:
        for m in succ[n]:
            pred[m].append(n)

    def chain(adj):
        height = {n: 1 for n in nodes}
        for _ in range(max(0, cap - 1)):
            nxt = {n: min(cap, 1 + max((height[m] for m in adj[n]), default=0)) for n in nodes}
            if nxt == height:
                break
            height = nxt
        return height

    return chain(succ), chain(pred)


def gca(d: SuspectSubgraph, theta_depth: int = 2) -> SuspectSubgraph:
    """Repeatedly drop cells whose forward and backward heights are both below ``theta_depth``."""
    edges = set(d.edges)
    while True:
        nodes = {c for _, c, _ in edges}
        fwd, bwd = node_heights(nodes, edges, theta_depth)
        drop = {n for n in nodes if fwd[n] < theta_depth and bwd[n] < theta_depth}
        if not drop:
            break
        edges = {e for e in edges if e[1] not in drop}
    return _from_edges(edges, GCA)


# -- stage 3 -----------------------------------------------------------------

@dataclass(frozen=True)
class NetProfile:
    p1: float
    net_cc: float
    net_sc: float


def fsa(d: SuspectSubgraph, profiles: Mapping[str, NetProfile],
        thresholds: FsaThresholds = FsaThresholds()) -> SuspectSubgraph:
    """Remove nets whose probability and controllability fall in the Free range."""
    t = thresholds
    keep = set()
    for net in d.nets:
        if net not in profiles:
            raise MissingFeature(f"no probability/controllability profile for net {net}")
        p = profiles[net]
        free_like = (p.net_cc - t.lambda_cc < t.theta_cc and p.net_sc - t.lambda_sc < t.theta_sc
                     and t.theta_l < p.p1 < t.theta_u)
        if not free_like:
            keep.add(net)
    edges = frozenset(e for e in d.edges if e[0] in keep and e[2] in keep)
    return SuspectSubgraph(frozenset(keep), frozenset(c for _, c, _ in edges), edges, FSA)


def profiles_from_features(table) -> dict[str, NetProfile]:
    """Per-net FSA inputs from a feature table (p1 and no-scan SCOAP)."""
    p1, cc0, cc1 = table.column("p1"), table.column("cc0_ns"), table.column("cc1_ns")
    sc0, sc1 = table.column("sc0_ns"), table.column("sc1_ns")
    return {n: NetProfile(float(p1[i]), math.hypot(cc0[i], cc1[i]), math.hypot(sc0[i], sc1[i]))
            for i, n in enumerate(table.nets)}


def run_stages(h: Hypergraph, t_nets: Iterable[str], profiles: Mapping[str, NetProfile],
               thresholds: FsaThresholds = FsaThresholds(),
               theta_depth: int = 2) -> dict[str, SuspectSubgraph]:
    ml = SuspectSubgraph(frozenset(t_nets), stage=ML)
    a = nca(h, ml.nets)
    b = gca(a, theta_depth)
    c = fsa(b, profiles, thresholds)
    stages = {ML: ml, NCA: a, GCA: b, FSA: c}
    check_containment(stages)
    return stages


def check_containment(stages: Mapping[str, SuspectSubgraph]) -> None:
    order = [stages[s].nets for s in STAGES if s in stages]
    for outer, inner in zip(order, order[1:]):
        if not inner <= outer:
            raise AssertionError(f"post-processing stage added nets: {sorted(inner - outer)[:5]}")


# -- reporting ----------------------------------------------------------------

def fp_reduction(fp_ml: int, fp_fsa: int) -> float:
    """Percent drop in false positives from the ML stage to the final stage."""
    if fp_ml <= 0:
        return 0.0
    return round(100.0 * (fp_ml - fp_fsa) / fp_ml, 2)


def stage_metrics(nets: Iterable[str], truth: set[str]) -> dict[str, int]:
    nets = set(nets)
    return {"tp": len(nets & truth), "fp": len(nets - truth), "fn": len(truth - nets)}


def reconstruct_report(stages: Mapping[str, SuspectSubgraph], ground_truth: Iterable[str] | None = None,
                       *, thresholds: FsaThresholds | None = None, theta_depth: int | None = None,
                       metadata: Mapping | None = None) -> dict:
    """Per-stage net lists, the reconstructed circuit and, with ground truth, FP/FN/TP."""
    check_containment(stages)
    final = stages[FSA]
    report: dict = {
        "stages": {s: {"nets": stages[s].sorted_nets()} for s in STAGES if s in stages},
        "circuit": {
            "cells": sorted(final.nodes),
            "edges": [list(e) for e in sorted(final.edges)],
        },
    }
    if thresholds is not None:
        report["thresholds"] = {"theta_depth": theta_depth, "theta_L": thresholds.theta_l,
                                "theta_U": thresholds.theta_u, "theta_cc": thresholds.theta_cc,
                                "theta_sc": thresholds.theta_sc,
                                "lambda_cc": thresholds.lambda_cc,
                                "lambda_sc": thresholds.lambda_sc}
    if metadata is not None:
        report["metadata"] = dict(metadata)
    if ground_truth is not None:
        truth = set(ground_truth)
        for s, body in report["stages"].items():
            body.update(stage_metrics(stages[s].nets, truth))
        report["reduction_pct"] = fp_reduction(report["stages"][ML]["fp"],
                                               report["stages"][FSA]["fp"])
    return report


def to_dot(h: Hypergraph, stages: Mapping[str, SuspectSubgraph], name: str = "trojan") -> str:
    """Graphviz view: cells as boxes; final nets red, nets pruned by FSA grey and dashed."""
    final = stages[FSA]
    pruned = stages[GCA].nets - final.nets if GCA in stages else frozenset()
    edges = stages[GCA].edges if GCA in stages else final.edges
    cells = sorted({c for _, c, _ in edges})
    lines = [f"digraph {json.dumps(name)} {{", "  rankdir=LR;", "  node [shape=box];"]
    for c in cells:
        label = json.dumps(c + "\n" + h.netlist.cell_map[c].type)
        lines.append(f"  {json.dumps(c)} [label={label}];")
    # a net is drawn on every cell-to-cell hop it makes inside the subgraph
    producers: dict[str, set[str]] = {}
    for a, c, b in edges:
        producers.setdefault(b, set()).add(c)
    for a, c, b in sorted(edges):
        attrs = _net_attrs(a, final.nets, pruned)
        for src in sorted(producers.get(a, ())) or [None]:
            if src is None:
                lines.append(f"  {json.dumps('net:' + a)} [shape=plaintext, label={json.dumps(a)}];")
                src = "net:" + a
            lines.append(f"  {json.dumps(src)} -> {json.dumps(c)} [{attrs}];")
    outs = sorted({b for _, _, b in edges} - {a for a, _, _ in edges})
    for b in outs:
        attrs = _net_attrs(b, final.nets, pruned)
        lines.append(f"  {json.dumps('net:' + b)} [shape=plaintext, label={json.dumps(b)}];")
        for c in sorted(producers[b]):
            lines.append(f"  {json.dumps(c)} -> {json.dumps('net:' + b)} [{attrs}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _net_attrs(net: str, final: frozenset, pruned: frozenset) -> str:
    label = f"label={json.dumps(net)}"
    if net in final:
        return f'{label}, color="red", role="trojan"'
    if net in pruned:
        return f'{label}, color="gray", style="dashed", role="pruned_fsa"'
    return f'{label}, role="boundary"'


def netlist_fragment(h: Hypergraph, sub: SuspectSubgraph, name: str = "trojan_fragment") -> str:
    """Structural netlist of the reconstructed cells; loose ends become ports."""
    cells = [h.netlist.cell_map[c] for c in sorted(sub.nodes)]
    lib = h.netlist.library
    driven = {c.pins[lib[c.type].output] for c in cells}
    read = {net for c in cells for pin, net in c.pins.items() if pin != lib[c.type].output}
    inputs = tuple(sorted(read - driven))
    outputs = tuple(sorted(driven - read)) or tuple(sorted(driven))[:1]
    frag = Netlist(name, lib, tuple(cells), inputs, outputs)
    return emit_netlist(frag)


# -- per-stage vote over several models ------------------------------------------

def vote_stage(nets_per_model: Sequence[Iterable[str]]) -> frozenset[str]:
    """Nets flagged by a strict majority of models; ties count as Free."""
    counts: dict[str, int] = {}
    for nets in nets_per_model:
        for n in set(nets):
            counts[n] = counts.get(n, 0) + 1
    k = len(nets_per_model)
    return frozenset(n for n, c in counts.items() if 2 * c > k)

