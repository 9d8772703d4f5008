"""Small helper for emitting cells from a library by logical function."""

from __future__ import annotations

from .library import CellLibrary, LibraryError
from .netlist import Cell


class CircuitBuilder:
    """Accumulates cells; nets and instances get ``prefix`` plus a counter."""

    def __init__(self, library: CellLibrary, prefix: str = "n"):
        self.library = library
        self.prefix = prefix
        self.cells: list[Cell] = []
        self.nets: list[str] = []
        self._count = 0

    def fresh(self) -> str:
        name = f"{self.prefix}{self._count}"
        self._count += 1
        self.nets.append(name)
        return name

    def _cell_for(self, kind: str, arity: int) -> str:
        name = self.library.find(kind, arity)
        if name is None:
            raise LibraryError(f"library has no {arity}-input {kind} cell")
        return name

    def _max_arity(self, kind: str) -> int:
        return max(k for k in range(2, 7) if self.library.find(kind, k)) \
            if any(self.library.find(kind, k) for k in range(2, 7)) else 0

    def cell(self, type_name: str, pins: dict[str, str], out: str | None = None,
             inst: str | None = None) -> str:
        ct = self.library[type_name]
        out = out or self.fresh()
        pins = dict(pins)
        pins[ct.output] = out
        inst = inst or f"{self.prefix}g{len(self.cells)}"
        self.cells.append(Cell(inst, type_name, pins))
        return out

    def gate(self, kind: str, ins: list[str], out: str | None = None) -> str:
        """Emit ``kind`` (and/or/nand/nor/xor/xnor/inv/buf) over ``ins``, splitting wide gates."""
        ins = list(ins)
        if kind in ("inv", "buf"):
            name = self._cell_for(kind, 1)
            return self.cell(name, {self.library[name].inputs[0]: ins[0]}, out)
        if len(ins) == 1:
            if kind in ("and", "or", "xor"):
                return self.gate("buf", ins, out)
            return self.gate("inv", ins, out)
        widest = self._max_arity(kind if kind in ("and", "or", "xor") else
                                 {"nand": "and", "nor": "or", "xnor": "xor"}[kind])
        if len(ins) <= widest and self.library.find(kind, len(ins)):
            name = self._cell_for(kind, len(ins))
            ct = self.library[name]
            return self.cell(name, dict(zip(ct.inputs, ins)), out)
        base = {"nand": "and", "nor": "or", "xnor": "xor"}.get(kind, kind)
        width = max(2, widest)
        while len(ins) > width:
            ins = [self.gate(base, ins[i:i + width]) if len(ins[i:i + width]) > 1 else ins[i]
                   for i in range(0, len(ins), width)]
        return self.gate(kind, ins, out)

    def mux(self, a: str, b: str, sel: str, out: str | None = None) -> str:
        """``sel ? b : a``."""
        name = next((c.name for c in self.library.cells.values()
                     if not c.is_sequential and c.arity == 3 and
                     all(c.evaluate([x, y, s]) == (y if s else x)
                         for x in (0, 1) for y in (0, 1) for s in (0, 1))), None)
        if name is not None:
            ct = self.library[name]
            return self.cell(name, dict(zip(ct.inputs, (a, b, sel))), out)
        ns = self.gate("inv", [sel])
        return self.gate("or", [self.gate("and", [a, ns]), self.gate("and", [b, sel])], out)

    def dff(self, d: str, clk: str, rst: str | None = None, q: str | None = None) -> str:
        ct = self.library.dff(with_reset=rst is not None)
        if ct is None:
            raise LibraryError("library has no suitable flip-flop")
        pins = {ct.seq.d: d, ct.seq.clk: clk}
        if rst is not None:
            pins[ct.seq.rst] = rst
        return self.cell(ct.name, pins, q)
