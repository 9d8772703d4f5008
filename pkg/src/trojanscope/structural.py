"""Structural net features: level-1/2 fanin and fanout, and hop distances."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .hypergraph import Hypergraph


@dataclass(frozen=True)
class StructuralFeatures:
    fanin_l1: int
    fanout_l1: int
    fanin_l2: int
    fanout_l2: int
    dist_ff_d: int
    dist_ff_q: int
    dist_pi: int
    dist_po: int


def unreachable(h: Hypergraph) -> int:
    """Distance sentinel, larger than any path in the design."""
    return len(h.netlist.cells) + 1


def _data_pins(h: Hypergraph, cell_name: str) -> tuple[str, ...]:
    """Input pins that carry data: everything except clock/reset/enable on flops."""
    ct = h.netlist.library[h.netlist.cell_map[cell_name].type]
    if ct.seq is not None:
        return (ct.seq.d,)
    return ct.inputs


def _multi_source_bfs(sources, step) -> dict[str, int]:
    dist = {n: 0 for n in sources}
    queue = deque(sorted(sources))
    while queue:
        net = queue.popleft()
        d = dist[net] + 1
        for nxt in step(net):
            if nxt not in dist:
                dist[nxt] = d
                queue.append(nxt)
    return dist


def compute_structural(h: Hypergraph) -> dict[str, StructuralFeatures]:
    """Per-net structural features.

    Distances count cells traversed. ``dist_pi``/``dist_po`` cross flip-flops
    through their D pin only; ``dist_ff_*`` stop at the first flop. Nets that
    cannot reach the target get :func:`unreachable`.
    """
    cmap = h.netlist.cell_map
    far = unreachable(h)

    def forward(net, through_flops):
        for cell, pin in h.sinks[net]:
            if pin in _data_pins(h, cell) and (through_flops or not h.is_flop(cell)):
                yield h.output_of(cell)

    def backward(net, through_flops):
        drv = h.driver.get(net)
        if drv is None or (h.is_flop(drv) and not through_flops):
            return
        c = cmap[drv]
        for pin in _data_pins(h, drv):
            yield c.pins[pin]

    # distance *from* the nearest PI is a forward search seeded at the PIs
    to_pi = _multi_source_bfs(h.inputs, lambda n: forward(n, True))
    to_po = _multi_source_bfs(h.outputs, lambda n: backward(n, True))
    to_q = _multi_source_bfs(h.pseudo_inputs, lambda n: forward(n, False))
    to_d = _multi_source_bfs(h.pseudo_outputs, lambda n: backward(n, False))

    fanin1 = {}
    for net in h.net_names:
        fanin1[net] = len(h.fanin(net)) if net in h.driver else 0
    out = {}
    for net in h.net_names:
        ins = h.fanin(net)
        outs = h.fanout(net)
        lvl2_out = set()
        for o in outs:
            lvl2_out |= h.fanout(o)
        out[net] = StructuralFeatures(
            fanin_l1=fanin1[net],
            fanout_l1=len(h.sinks[net]),
            fanin_l2=sum(fanin1[i] for i in ins),
            fanout_l2=len(lvl2_out),
            dist_ff_d=to_d.get(net, far),
            dist_ff_q=to_q.get(net, far),
            dist_pi=to_pi.get(net, far),
            dist_po=to_po.get(net, far),
        )
    return out
