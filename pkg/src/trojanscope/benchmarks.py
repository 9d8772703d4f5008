"""Desk-scale benchmark circuits used by tests, scripts and examples.

``c17`` is the ISCAS-85 circuit. ``uart`` is a synthetic UART-class
sequential design (baud generator, transmitter, receiver, command decoder)
generated from library primitives, sized to run the full flow in seconds.
"""

from __future__ import annotations

import random

from .builder import CircuitBuilder
from .library import CellLibrary
from .netlist import Netlist, parse_netlist

C17 = """\
module c17 (N1, N2, N3, N6, N7, N22, N23);
  input N1, N2, N3, N6, N7;
  output N22, N23;
  wire N10, N11, N16, N19;
  nand2 NAND2_1 (.a(N1), .b(N3), .y(N10));
  nand2 NAND2_2 (.a(N3), .b(N6), .y(N11));
  nand2 NAND2_3 (.a(N2), .b(N11), .y(N16));
  nand2 NAND2_4 (.a(N11), .b(N7), .y(N19));
  nand2 NAND2_5 (.a(N10), .b(N16), .y(N22));
  nand2 NAND2_6 (.a(N16), .b(N19), .y(N23));
endmodule
"""


def c17(library: CellLibrary | None = None) -> Netlist:
    return parse_netlist(C17, library or CellLibrary.default())


def _counter(b: CircuitBuilder, name: str, width: int, inc: str, clear: str,
             clk: str, rst: str) -> list[str]:
    """Synchronous up-counter: +1 when ``inc``, to zero when ``clear``."""
    q = [f"{name}_q_{i}_" for i in range(width)]
    nclear = b.gate("inv", [clear])
    carry = inc
    for i in range(width):
        nxt = b.gate("xor", [q[i], carry])
        b.dff(b.gate("and", [nxt, nclear]), clk, rst, q=q[i])
        if i + 1 < width:
            carry = b.gate("and", [carry, q[i]])
    return q


def _equals(b: CircuitBuilder, bits: list[str], value: int, out: str | None = None) -> str:
    lits = [bit if (value >> i) & 1 else b.gate("inv", [bit]) for i, bit in enumerate(bits)]
    return b.gate("and", lits, out)


def uart(library: CellLibrary | None = None, data_bits: int = 8, baud_div: int = 10) -> Netlist:
    """Synthetic UART-class design (about 180 cells, 46 flops with the defaults)."""
    lib = library or CellLibrary.default()
    b = CircuitBuilder(lib, prefix="u")
    clk, rst = "clk", "rst"
    din = [f"din_{i}_" for i in range(data_bits)]
    inputs = [clk, rst, "rx", "tx_start", "cfg_parity"] + din

    # baud generator
    tick = "baud_tick"
    baud = _counter(b, "baud", 4, "1'b1", tick, clk, rst)
    _equals(b, baud, baud_div - 1, out=tick)

    # transmitter: shift register with start/stop framing
    busy = "tx_busy"
    nbusy = b.gate("inv", [busy])
    load = b.gate("and", ["tx_start", nbusy])
    shift = b.gate("and", [tick, busy])
    width = data_bits + 2
    sh = [f"tx_sh_{i}_" for i in range(width)]
    frame = ["1'b0"] + din + ["1'b1"]
    for i in range(width):
        nxt_shift = sh[i + 1] if i + 1 < width else "1'b1"
        held = b.mux(sh[i], nxt_shift, shift)
        b.dff(b.mux(held, frame[i], load), clk, rst, q=sh[i])
    txbits = _counter(b, "txcnt", 4, shift, load, clk, rst)
    tx_done = b.gate("and", [shift, _equals(b, txbits, width - 1)])
    busy_next = b.gate("or", [load, b.gate("and", [busy, b.gate("inv", [tx_done])])])
    b.dff(busy_next, clk, rst, q=busy)
    b.gate("or", [sh[0], nbusy], out="tx")

    # receiver: two-stage synchroniser, start detect, sampling shift register
    rx1 = b.dff("rx", clk, rst)
    rx2 = b.dff(rx1, clk, rst)
    rbusy = "rx_busy"
    start = b.gate("and", [b.gate("inv", [rx2]), b.gate("inv", [rbusy])])
    sample = b.gate("and", [tick, rbusy])
    rbits = _counter(b, "rxcnt", 4, sample, start, clk, rst)
    rx_done = b.gate("and", [sample, _equals(b, rbits, data_bits)])
    rbusy_next = b.gate("or", [start, b.gate("and", [rbusy, b.gate("inv", [rx_done])])])
    b.dff(rbusy_next, clk, rst, q=rbusy)
    rsh = [f"rx_sh_{i}_" for i in range(data_bits)]
    for i in range(data_bits):
        nxt = rsh[i + 1] if i + 1 < data_bits else rx2
        b.dff(b.mux(rsh[i], nxt, sample), clk, rst, q=rsh[i])
    rdata = [f"rx_data_{i}_" for i in range(data_bits)]
    for i in range(data_bits):
        b.dff(b.mux(rdata[i], rsh[i], rx_done), clk, rst, q=rdata[i])
    valid = b.dff(rx_done, clk, rst, q="rx_valid")

    # command decoder and parity on received data
    outputs = ["tx", "rx_valid"]
    for k, code in enumerate((0xA5, 0x3C, 0x0F)):
        hit = b.gate("and", [valid, _equals(b, rdata, code & ((1 << data_bits) - 1))])
        b.dff(hit, clk, rst, q=f"cmd_{k}")
        outputs.append(f"cmd_{k}")
    parity = b.gate("xor", rdata)
    b.gate("xnor", [parity, "cfg_parity"], out="parity_ok")
    outputs.append("parity_ok")
    for i in range(data_bits):
        b.gate("buf", [rdata[i]], out=f"dout_{i}_")
        outputs.append(f"dout_{i}_")
    b.gate("buf", [busy], out="tx_busy_o")
    outputs.append("tx_busy_o")

    return Netlist("uart", lib, tuple(b.cells), tuple(inputs), tuple(outputs),
                   clocks=frozenset({clk}), resets=frozenset({rst}))


# -- random circuits for property tests ---------------------------------------

_KINDS = ("and", "or", "nand", "nor", "xor", "xnor")


def random_fanout_free(rng: random.Random, max_inputs: int = 16,
                       library: CellLibrary | None = None) -> Netlist:
    """A random tree circuit: every net has at most one sink."""
    lib = library or CellLibrary.default()
    b = CircuitBuilder(lib, prefix="t")
    n_pis = rng.randint(2, max_inputs)
    pis = [f"x{i}" for i in range(n_pis)]
    frontier = list(pis)
    rng.shuffle(frontier)
    while len(frontier) > 1:
        k = min(len(frontier), rng.randint(2, 4))
        ins, frontier = frontier[:k], frontier[k:]
        out = b.gate(rng.choice(_KINDS), ins)
        if rng.random() < 0.2:
            out = b.gate("inv", [out])
        frontier.insert(rng.randrange(len(frontier) + 1), out)
    return Netlist("tree", lib, tuple(b.cells), tuple(pis), (frontier[0],))


def random_dag(rng: random.Random, n_inputs: int = 8, n_gates: int = 40, n_flops: int = 0,
               library: CellLibrary | None = None) -> Netlist:
    """Random reconvergent circuit; flops (if any) close random feedback paths."""
    lib = library or CellLibrary.default()
    b = CircuitBuilder(lib, prefix="r")
    pis = [f"x{i}" for i in range(n_inputs)]
    qs = [f"q{i}" for i in range(n_flops)]
    pool = pis + qs
    for _ in range(n_gates):
        kind = rng.choice(_KINDS + ("inv",))
        k = 1 if kind == "inv" else rng.randint(2, 3)
        ins = rng.sample(pool, min(k, len(pool)))
        pool.append(b.gate(kind, ins))
    inputs = list(pis)
    if n_flops:
        inputs.append("clk")
        for q in qs:
            b.dff(rng.choice(pool[n_inputs + n_flops:]), "clk", q=q)
    driven = {c.pins[lib[c.type].output] for c in b.cells}
    read = {net for c in b.cells for pin, net in c.pins.items() if pin != lib[c.type].output}
    outputs = sorted(driven - read) or [pool[-1]]
    return Netlist("dag", lib, tuple(b.cells), tuple(inputs), tuple(outputs),
                   clocks=frozenset({"clk"}) if n_flops else frozenset())
