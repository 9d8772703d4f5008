import itertools
import random
import time
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from trojanscope.benchmarks import random_dag, random_fanout_free
from trojanscope.hypergraph import build_hypergraph
from trojanscope.netlist import parse_netlist
from trojanscope.sim import comb_eval, seq_run
from trojanscope.testability import (FULL_SCAN, NO_SCAN, SCOAP_CEILING, compute_probabilities,
                                     compute_scoap, controllability_norms)


def exhaustive_frequency(h):
    """Fraction of all PI assignments that set each net to 1 (exact, bit-parallel)."""
    pis = sorted(h.inputs - h.constants)
    width = 1 << len(pis)
    words = {}
    for j, net in enumerate(pis):
        w = 0
        for row in range(width):
            if (row >> j) & 1:
                w |= 1 << row
        words[net] = w
    vals = comb_eval(h, words, width)
    return {net: bin(vals[h.index[net]]).count("1") / width for net in h.net_names}


def test_probability_matches_exhaustive_on_fanout_free():
    rng = random.Random(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(25):
        h = build_hypergraph(random_fanout_free(rng, max_inputs=16))
        probs = compute_probabilities(h)
        truth = exhaustive_frequency(h)
        for net, f in truth.items():
            worst = max(worst, abs(probs[net].p1 - f))
    assert worst <= 1e-12
    assert time.perf_counter() - start < 10


# closed forms for static probability and 0->1 activity of the basic gates
P1 = {
    "inv": lambda a, b: 1 - a,
    "and2": lambda a, b: a * b,
    "or2": lambda a, b: a + b - a * b,
    "nand2": lambda a, b: 1 - a * b,
    "nor2": lambda a, b: (1 - a) * (1 - b),
    "xor2": lambda a, b: a + b - 2 * a * b,
}
PT = {
    "inv": lambda a, b: (1 - a) * a,
    "and2": lambda a, b: (1 - a * b) * (a * b),
    "or2": lambda a, b: (1 - a) * (1 - b) * (1 - (1 - a) * (1 - b)),
    "nand2": lambda a, b: (a * b) * (1 - a * b),
    "nor2": lambda a, b: (1 - (1 - a) * (1 - b)) * (1 - a) * (1 - b),
    "xor2": lambda a, b: (1 - (a + b - 2 * a * b)) * (a + b - 2 * a * b),
}
LEVELS = (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10))


@pytest.mark.parametrize("gate", sorted(P1))
@pytest.mark.parametrize("a,b", list(itertools.product(LEVELS, repeat=2)))
def test_gate_tables_exact(lib, gate, a, b):
    ins = [a] if gate == "inv" else [a, b]
    p = lib[gate].probability(ins)
    assert isinstance(p, Fraction)
    assert p == P1[gate](a, b)
    assert (1 - p) * p == PT[gate](a, b)


@pytest.mark.parametrize("gate", sorted(P1))
def test_gate_tables_through_netlist(lib, gate):
    pins = "(.a(a), .y(y))" if gate == "inv" else "(.a(a), .b(b), .y(y))"
    n = parse_netlist(f"module m (a, b, y); input a, b; output y; {gate} g {pins}; endmodule", lib)
    h = build_hypergraph(n)
    for a, b in itertools.product(LEVELS, repeat=2):
        pr = compute_probabilities(h, {"a": float(a), "b": float(b)})["y"]
        assert pr.p1 == pytest.approx(float(P1[gate](a, b)), abs=1e-15)
        assert pr.p_trans == pytest.approx(float(PT[gate](a, b)), abs=1e-15)


def test_and_half_half_activity(lib):
    n = parse_netlist("module m (a, b, y); input a, b; output y; and2 g (.a(a), .b(b), .y(y)); endmodule", lib)
    assert compute_probabilities(build_hypergraph(n))["y"].p_trans == 0.1875


SCOAP_FIXTURE = """
module scoap10 (a, b, c, d, z, n6);
  input a, b, c, d;
  output z, n6;
  nand2 g1 (.a(a), .b(b), .y(n1));
  nor2  g2 (.a(c), .b(d), .y(n2));
  and4  g3 (.a(n1), .b(n1), .c(n2), .d(n2), .y(n3));
  and4  g4 (.a(n3), .b(n3), .c(n3), .d(n3), .y(n4));
  and4  g5 (.a(n4), .b(n4), .c(n4), .d(n4), .y(n5));
  and4  g6 (.a(n5), .b(n5), .c(n5), .d(n5), .y(n6));
  or2   g7 (.a(n6), .b(a), .y(n7));
  inv   g8 (.a(n6), .y(n8));
  xor2  g9 (.a(n8), .b(b), .y(n9));
  nand2 g10 (.a(n7), .b(n9), .y(z));
endmodule
"""

# (cc0, cc1, co) worked by hand with the Goldstein rules:
#   AND: cc1 = sum cc1 + 1, cc0 = min cc0 + 1, co(in) = co(out) + sum cc1(others) + 1
#   XOR: co(in) = co(out) + min(cc0, cc1)(other) + 1; OR/NOR/NAND/INV/BUF analogously.
#   A net's co is the minimum over its sinks (n6 is also a primary output).
SCOAP_EXPECTED = {
    "a": (1, 1, 17), "b": (1, 1, 11), "c": (1, 1, 724), "d": (1, 1, 724),
    "n1": (3, 2, 723), "n2": (2, 3, 722), "n3": (3, 11, 714), "n4": (4, 45, 680),
    "n5": (5, 181, 544), "n6": (6, 725, 0),
    "n7": (8, 2, 10), "n8": (726, 7, 5), "n9": (9, 9, 3), "z": (12, 9, 0),
}


def test_scoap_hand_fixture(lib):
    h = build_hypergraph(parse_netlist(SCOAP_FIXTURE, lib))
    s = compute_scoap(h, FULL_SCAN)
    got = {net: (v.cc0, v.cc1, v.co) for net, v in s.items()}
    assert got == SCOAP_EXPECTED
    assert max(max(v) for v in got.values()) > 254
    ns = compute_scoap(h, NO_SCAN)
    assert {net: (v.cc0, v.cc1, v.co) for net, v in ns.items()} == SCOAP_EXPECTED
    assert all(v.sc0 == v.sc1 == v.so == 0 for v in ns.values())


def test_scoap_through_flop(lib):
    src = """module m (a, clk, y); input a, clk; output y;
      dff f (.d(a), .clk(clk), .q(q)); buf g (.a(q), .y(y)); endmodule"""
    h = build_hypergraph(parse_netlist(src, lib))
    fs = compute_scoap(h, FULL_SCAN)
    assert (fs["q"].cc0, fs["q"].cc1, fs["a"].co) == (1, 1, 0)
    ns = compute_scoap(h, NO_SCAN)
    assert (ns["q"].cc1, ns["q"].sc1, ns["y"].cc1, ns["y"].sc1) == (1, 1, 2, 1)
    assert (ns["a"].co, ns["a"].so) == (1, 1)


def test_scoap_reset_and_enable(lib):
    src = """module m (a, e, r, clk, y); input a, e, r, clk; output y;
      dffre f (.d(a), .clk(clk), .rst(r), .en(e), .q(y)); endmodule"""
    h = build_hypergraph(parse_netlist(src, lib, resets=["r"]))
    ns = compute_scoap(h, NO_SCAN)
    # load needs en=1 and rst=0; reset alone gives a cheap 0
    assert ns["y"].cc1 == 3 and ns["y"].cc0 == 1
    assert ns["y"].sc1 == 1


def test_unreachable_state_saturates(lib):
    # q can only ever be loaded from itself, so neither value is controllable without scan
    src = """module m (clk, y); input clk; output y;
      dff f (.d(q), .clk(clk), .q(q)); buf g (.a(q), .y(y)); endmodule"""
    h = build_hypergraph(parse_netlist(src, lib))
    ns = compute_scoap(h, NO_SCAN)
    assert ns["y"].cc1 == SCOAP_CEILING and ns["y"].cc0 == SCOAP_CEILING
    assert compute_scoap(h, FULL_SCAN)["y"].cc1 == 2


def test_controllability_norms(lib):
    h = build_hypergraph(parse_netlist(SCOAP_FIXTURE, lib))
    scoap = compute_scoap(h, NO_SCAN)
    norms = controllability_norms(scoap)
    assert set(norms) == set(h.net_names)
    assert norms["a"].net_cc == pytest.approx(2 ** 0.5)
    assert norms["n4"].net_cc == pytest.approx((4 ** 2 + 45 ** 2) ** 0.5)
    assert norms["a"].net_sc == 0.0


def test_toggle_flop_probability(lib):
    src = """module m (clk, y); input clk; output y;
      inv g (.a(q), .y(d)); dff f (.d(d), .clk(clk), .q(q)); buf b (.a(q), .y(y)); endmodule"""
    probs = compute_probabilities(build_hypergraph(parse_netlist(src, lib)))
    assert probs.converged and probs["q"].p1 == pytest.approx(0.5)


def test_flop_fixed_point_is_steady_state(lib):
    # q' = a & !q ... steady state p = 0.5 * (1 - p)  ->  p = 1/3
    src = """module m (a, clk, y); input a, clk; output y;
      inv g1 (.a(q), .y(nq)); and2 g2 (.a(a), .b(nq), .y(d));
      dff f (.d(d), .clk(clk), .q(q)); buf b (.a(q), .y(y)); endmodule"""
    probs = compute_probabilities(build_hypergraph(parse_netlist(src, lib)))
    assert probs.converged
    assert probs["q"].p1 == pytest.approx(1 / 3, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_restart_from_fixed_point_stays_put(seed):
    rng = random.Random(seed)
    h = build_hypergraph(random_dag(rng, n_inputs=4, n_gates=14, n_flops=3))
    first = compute_probabilities(h)
    if not first.converged:
        return
    q = {h.net_names[f.q]: first[h.net_names[f.q]].p1 for f in h.flop_ops}
    again = compute_probabilities(h, initial_q=q)
    for net, v in first.items():
        assert again[net].p1 == pytest.approx(v.p1, abs=1e-6)


def test_reset_forces_zero(lib):
    src = """module m (a, r, clk, y); input a, r, clk; output y;
      dffr f (.d(a), .clk(clk), .rst(r), .q(y)); endmodule"""
    h = build_hypergraph(parse_netlist(src, lib, resets=["r"]))
    assert compute_probabilities(h, {"r": 1.0})["y"].p1 == pytest.approx(0.0, abs=1e-8)
    assert compute_probabilities(h, {"r": 0.0})["y"].p1 == pytest.approx(0.5, abs=1e-8)


def test_iteration_cap_flags_nonconvergence(uart_h):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        probs = compute_probabilities(uart_h, max_iter=5)
    assert not probs.converged and probs.iterations == 5 and probs.residual > 1e-9
    with pytest.warns(RuntimeWarning):
        compute_probabilities(uart_h, max_iter=5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_probabilities_are_probabilities(seed):
    h = build_hypergraph(random_dag(random.Random(seed), n_flops=seed % 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        probs = compute_probabilities(h)
    for p in probs.values():
        assert 0.0 <= p.p1 <= 1.0
        assert 0.0 <= p.p_trans <= 0.25 + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_no_scan_never_cheaper_than_full_scan(seed):
    h = build_hypergraph(random_dag(random.Random(seed), n_flops=1 + seed % 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fs, ns = compute_scoap(h, FULL_SCAN), compute_scoap(h, NO_SCAN)
    for net in h.net_names:
        if net in h.inputs:
            continue
        assert ns[net].cc0 >= fs[net].cc0 or net in h.pseudo_inputs
        assert ns[net].cc1 >= fs[net].cc1 or net in h.pseudo_inputs


def test_simulated_flop_probability_close_to_vectorless(lib):
    src = """module m (a, clk, y); input a, clk; output y;
      inv g1 (.a(q), .y(nq)); and2 g2 (.a(a), .b(nq), .y(d));
      dff f (.d(d), .clk(clk), .q(q)); buf b (.a(q), .y(y)); endmodule"""
    h = build_hypergraph(parse_netlist(src, lib))
    rng = random.Random(3)
    width = 4096
    trace = seq_run(h, [{"a": rng.getrandbits(width)} for _ in range(60)], width, ["q"])
    freq = sum(bin(t["q"]).count("1") for t in trace[20:]) / (40 * width)
    assert freq == pytest.approx(1 / 3, abs=0.01)
