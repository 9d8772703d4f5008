import random

import pytest
from hypothesis import given, settings, strategies as st

from trojanscope.benchmarks import random_dag
from trojanscope.errors import MissingFeature, UnknownNet
from trojanscope.hypergraph import build_hypergraph
from trojanscope.library import CellLibrary
from trojanscope.netlist import parse_netlist
from trojanscope.postproc import (FSA, GCA, ML, NCA, FsaThresholds, NetProfile, SuspectSubgraph,
                                  check_containment, fp_reduction, fsa, gca, nca,
                                  netlist_fragment, reconstruct_report, run_stages, stage_metrics,
                                  to_dot,
                                  vote_stage)

LIB = CellLibrary.default()


# -- brute-force references -----------------------------------------------------

def nca_reference(h, flagged):
    """Every (input net, cell, output net) triple whose two nets are both flagged."""
    edges = set()
    for c in h.netlist.cells:
        ct = LIB[c.type]
        out = c.pins[ct.output]
        for pin in ct.inputs:
            if c.pins[pin] in flagged and out in flagged:
                edges.add((c.pins[pin], c.name, out))
    return edges


def _longest_walk(cell, edges, forward, cap):
    """Enumerate cell walks explicitly (bounded by cap) and return the longest length."""
    best = 1
    stack = [(cell, 1)]
    while stack:
        c, length = stack.pop()
        best = max(best, length)
        if length >= cap:
            continue
        if forward:
            outs = {b for a, x, b in edges if x == c}
            nxt = {x for a, x, b in edges if a in outs}
        else:
            ins = {a for a, x, b in edges if x == c}
            nxt = {x for a, x, b in edges if b in ins}
        stack.extend((n, length + 1) for n in nxt)
    return best


def gca_reference(edges, theta):
    edges = set(edges)
    while True:
        cells = {c for _, c, _ in edges}
        drop = {c for c in cells
                if _longest_walk(c, edges, True, theta) < theta
                and _longest_walk(c, edges, False, theta) < theta}
        if not drop:
            return edges
        edges = {e for e in edges if e[1] not in drop}


def fsa_reference(nets, profiles, t):
    keep = set()
    for n in nets:
        p = profiles[n]
        cc_small = p.net_cc - t.lambda_cc < t.theta_cc
        sc_small = p.net_sc - t.lambda_sc < t.theta_sc
        mid = t.theta_l < p.p1 < t.theta_u
        if not (cc_small and sc_small and mid):
            keep.add(n)
    return keep


def _random_case(seed):
    rng = random.Random(seed)
    n = random_dag(rng, n_inputs=rng.randint(3, 6), n_gates=rng.randint(6, 18),
                   n_flops=rng.randint(0, 2))
    h = build_hypergraph(n)
    nets = [x for x in h.net_names if x != "clk"]
    flagged = set(rng.sample(nets, rng.randint(1, min(20, len(nets)))))
    profiles = {x: NetProfile(rng.random(), rng.uniform(0, 10), rng.uniform(0, 10)) for x in nets}
    t = FsaThresholds(0.3, 0.7, rng.uniform(0, 10), rng.uniform(0, 10),
                      rng.uniform(0, 3), rng.uniform(0, 3))
    return h, flagged, profiles, t


def test_stages_match_brute_force_on_100_subgraphs():
    checked = 0
    for seed in range(100):
        h, flagged, profiles, t = _random_case(seed)
        a = nca(h, flagged)
        assert set(a.edges) == nca_reference(h, flagged)
        assert a.nets == frozenset(n for e in a.edges for n in (e[0], e[2]))
        for theta in (2, 3):
            b = gca(a, theta)
            assert set(b.edges) == gca_reference(a.edges, theta)
        b = gca(a, 2)
        c = fsa(b, profiles, t)
        assert set(c.nets) == fsa_reference(b.nets, profiles, t)
        assert len(c.nets) <= len(b.nets) <= len(a.nets) <= len(flagged)
        checked += len(a.nodes) > 0
    assert checked > 50


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_gca_idempotent_and_monotone(seed):
    h, flagged, profiles, t = _random_case(seed)
    st_ = run_stages(h, flagged, profiles, t, 2)
    assert gca(st_[GCA], 2).edges == st_[GCA].edges
    assert st_[FSA].nets <= st_[GCA].nets <= st_[NCA].nets <= st_[ML].nets


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_nca_sound_and_fsa_keeps_out_of_band_nets(seed):
    h, flagged, profiles, t = _random_case(seed)
    a = nca(h, flagged)
    for src, cell, dst in a.edges:
        assert src in flagged and dst in flagged and h.output_of(cell) == dst
    b = gca(a, 2)
    c = fsa(b, profiles, t)
    for net in b.nets:
        if not t.theta_l < profiles[net].p1 < t.theta_u:
            assert net in c.nets


def test_stage_metrics_extremes():
    truth = {f"t{i}" for i in range(12)}
    assert stage_metrics(truth, truth) == {"tp": 12, "fp": 0, "fn": 0}
    assert stage_metrics(set(), truth) == {"tp": 0, "fp": 0, "fn": 12}
    assert stage_metrics({"x", "t0"}, truth) == {"tp": 1, "fp": 1, "fn": 11}


CHAIN = """module m (a, b, y, z); input a, b; output y, z;
  inv g1 (.a(a), .y(n1)); inv g2 (.a(n1), .y(n2)); inv g3 (.a(n2), .y(y));
  inv g4 (.a(b), .y(z)); endmodule"""


def test_lone_gate_removed_and_chain_kept():
    h = build_hypergraph(parse_netlist(CHAIN, LIB))
    a = nca(h, {"n1", "n2", "y", "b", "z", "a"})
    assert ("b", "g4", "z") in a.edges
    b = gca(a, 2)
    assert b.nodes == {"g1", "g2", "g3"}
    assert gca(a, 4).nodes == frozenset()


def test_nca_drops_isolated_nets():
    h = build_hypergraph(parse_netlist(CHAIN, LIB))
    assert nca(h, {"n1", "z"}).nets == frozenset()
    with pytest.raises(UnknownNet):
        nca(h, {"nope"})


def test_fsa_thresholds():
    d = SuspectSubgraph(frozenset({"x", "y"}), frozenset({"g"}), frozenset({("x", "g", "y")}))
    prof = {"x": NetProfile(0.5, 1.0, 0.0), "y": NetProfile(0.01, 1.0, 0.0)}
    # default thresholds (0) never call a net free-like
    assert fsa(d, prof).nets == {"x", "y"}
    t = FsaThresholds(theta_cc=5.0, theta_sc=1.0)
    out = fsa(d, prof, t)
    assert out.nets == {"y"} and out.edges == frozenset()
    with pytest.raises(MissingFeature):
        fsa(d, {"x": prof["x"]}, t)
    with pytest.raises(ValueError):
        FsaThresholds(theta_l=0.7, theta_u=0.6)


def test_fp_reduction():
    assert fp_reduction(14, 1) == 92.86
    assert fp_reduction(0, 0) == 0.0
    assert fp_reduction(10, 10) == 0.0


def test_containment_violation():
    with pytest.raises(AssertionError):
        check_containment({ML: SuspectSubgraph(frozenset({"a"})),
                           NCA: SuspectSubgraph(frozenset({"a", "b"}))})


def test_report_and_exports():
    h = build_hypergraph(parse_netlist(CHAIN, LIB))
    prof = {n: NetProfile(0.5, 1.0, 1.0) for n in h.net_names}
    prof["n2"] = NetProfile(0.5, 0.5, 0.0)
    t = FsaThresholds(theta_cc=0.8, theta_sc=0.5)
    stages = run_stages(h, {"a", "n1", "n2", "y", "z"}, prof, t)
    rep = reconstruct_report(stages, {"n1", "n2", "y"}, thresholds=t, theta_depth=2)
    assert rep["stages"]["ml"]["fp"] == 2 and rep["stages"]["fsa"]["nets"] == ["a", "n1", "y"]
    assert rep["stages"]["fsa"]["tp"] == 2 and rep["stages"]["fsa"]["fn"] == 1
    assert rep["reduction_pct"] == 50.0
    dot = to_dot(h, stages)
    assert dot.startswith('digraph "trojan"') and 'role="pruned_fsa"' in dot
    assert dot.count('role="trojan"') >= 2
    frag = netlist_fragment(h, stages[GCA])
    again = parse_netlist(frag, LIB)
    assert {c.name for c in again.cells} == {"g1", "g2", "g3"}


def test_vote_stage():
    assert vote_stage([{"a", "b"}, {"a"}, {"b", "c"}, {"a"}]) == {"a"}
    assert vote_stage([{"a"}, set()]) == frozenset()
