"""Directed hypergraph view of a netlist with flip-flops cut.

Nets are hyperedges (one driver, any number of sinks). Flip-flop Q outputs act
as pseudo-primary inputs and D inputs as pseudo-primary outputs, so the
combinational part is a DAG that can be walked in topological order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

from .errors import CombinationalLoop, UnknownNet
from .library import CellType
from .netlist import Netlist


@dataclass(frozen=True)
class CombOp:
    cell: str
    type: CellType
    ins: tuple[int, ...]
    out: int


@dataclass(frozen=True)
class FlopOp:
    cell: str
    type: CellType
    d: int
    q: int
    clk: int
    rst: int | None
    en: int | None


class Hypergraph:
    """Read-only traversal structure; build once per netlist."""

    def __init__(self, netlist: Netlist):
        self.netlist = netlist
        lib = netlist.library
        self.net_names: tuple[str, ...] = tuple(sorted(netlist.nets))
        self.index: dict[str, int] = {n: i for i, n in enumerate(self.net_names)}
        self.driver: dict[str, str] = dict(netlist.drivers)
        sinks: dict[str, list[tuple[str, str]]] = {n: [] for n in self.net_names}
        for c in netlist.cells:
            ct = lib[c.type]
            for pin in ct.inputs:
                sinks[c.pins[pin]].append((c.name, pin))
        self.sinks = {n: tuple(sorted(v)) for n, v in sinks.items()}
        self.inputs = frozenset(netlist.inputs)
        self.outputs = frozenset(netlist.outputs)
        self.constants = netlist.constants

        comb = [c for c in netlist.cells if not lib[c.type].is_sequential]
        flops = [c for c in netlist.cells if lib[c.type].is_sequential]
        self.flops = tuple(sorted(c.name for c in flops))
        self.comb_order = self._toposort(comb)

        idx = self.index
        cmap = netlist.cell_map
        self.comb_ops = tuple(
            CombOp(name, lib[cmap[name].type],
                   tuple(idx[cmap[name].pins[p]] for p in lib[cmap[name].type].inputs),
                   idx[cmap[name].pins[lib[cmap[name].type].output]])
            for name in self.comb_order)
        ops = []
        for name in self.flops:
            c = cmap[name]
            seq = lib[c.type].seq
            ops.append(FlopOp(name, lib[c.type], idx[c.pins[seq.d]], idx[c.pins[seq.q]],
                              idx[c.pins[seq.clk]],
                              idx[c.pins[seq.rst]] if seq.rst else None,
                              idx[c.pins[seq.en]] if seq.en else None))
        self.flop_ops = tuple(ops)
        self.pseudo_inputs = frozenset(self.net_names[f.q] for f in self.flop_ops)
        self.pseudo_outputs = frozenset(self.net_names[f.d] for f in self.flop_ops)

    def _toposort(self, comb) -> tuple[str, ...]:
        lib = self.netlist.library
        comb_names = {c.name for c in comb}
        indeg = {}
        succ: dict[str, list[str]] = {c.name: [] for c in comb}
        for c in comb:
            ct = lib[c.type]
            preds = set()
            for pin in ct.inputs:
                drv = self.driver.get(c.pins[pin])
                if drv in comb_names:
                    preds.add(drv)
            indeg[c.name] = len(preds)
            for p in preds:
                succ[p].append(c.name)
        ready = sorted(n for n, d in indeg.items() if d == 0)
        queue = deque(ready)
        order = []
        while queue:
            n = queue.popleft()
            order.append(n)
            for s in sorted(succ[n]):
                indeg[s] -= 1
                if indeg[s] == 0:
                    queue.append(s)
        if len(order) != len(comb):
            raise CombinationalLoop(self._find_cycle({n for n, d in indeg.items() if d > 0}))
        return tuple(order)

    def _find_cycle(self, stuck: set[str]) -> list[str]:
        lib = self.netlist.library
        cmap = self.netlist.cell_map

        def preds(name):
            c = cmap[name]
            return [self.driver[c.pins[p]] for p in lib[c.type].inputs
                    if self.driver.get(c.pins[p]) in stuck]

        # every stuck cell has a stuck predecessor, so walking backwards must revisit
        start = min(stuck)
        path, seen = [start], {start: 0}
        while True:
            nxt = min(preds(path[-1]))
            if nxt in seen:
                cyc = path[seen[nxt]:]
                break
            seen[nxt] = len(path)
            path.append(nxt)
        out_nets = [cmap[n].pins[lib[cmap[n].type].output] for n in reversed(cyc)]
        return out_nets

    # -- queries -------------------------------------------------------------

    def _check(self, net: str) -> None:
        if net not in self.index:
            raise UnknownNet(net)

    def driver_cell(self, net: str):
        self._check(net)
        name = self.driver.get(net)
        return self.netlist.cell_map[name] if name else None

    def fanin(self, net: str) -> set[str]:
        """Input nets of the cell driving ``net`` (empty for primary inputs)."""
        cell = self.driver_cell(net)
        if cell is None:
            return set()
        ct = self.netlist.library[cell.type]
        return {cell.pins[p] for p in ct.inputs}

    def fanout(self, net: str) -> set[str]:
        """Output nets of every cell that reads ``net``."""
        self._check(net)
        lib = self.netlist.library
        cmap = self.netlist.cell_map
        return {cmap[c].pins[lib[cmap[c].type].output] for c, _ in self.sinks[net]}

    def output_of(self, cell_name: str) -> str:
        c = self.netlist.cell_map[cell_name]
        return c.pins[self.netlist.library[c.type].output]

    def is_flop(self, cell_name: str) -> bool:
        return self.netlist.library[self.netlist.cell_map[cell_name].type].is_sequential

    @cached_property
    def levels(self) -> dict[str, int]:
        """Combinational level of every cell (sources at level 0 feed level-1 cells)."""
        net_level = {}
        for net in self.net_names:
            if net not in self.driver or self.is_flop(self.driver[net]):
                net_level[net] = 0
        lvl = {}
        for op in self.comb_ops:
            lvl[op.cell] = 1 + max((net_level[self.net_names[i]] for i in op.ins), default=0)
            net_level[self.net_names[op.out]] = lvl[op.cell]
        return lvl

    def comb_fanin_cone(self, nets) -> set[str]:
        """All nets combinationally upstream of ``nets`` (inclusive), stopping at flops."""
        seen = set()
        stack = list(nets)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            drv = self.driver.get(n)
            if drv is not None and not self.is_flop(drv):
                stack.extend(self.fanin(n))
        return seen

    def comb_fanout_cone(self, nets) -> set[str]:
        seen = set()
        stack = list(nets)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            for c, _ in self.sinks[n]:
                if not self.is_flop(c):
                    stack.append(self.output_of(c))
        return seen


def build_hypergraph(n: Netlist) -> Hypergraph:
    return Hypergraph(n)
