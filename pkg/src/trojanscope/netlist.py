"""Structural gate-level netlists: data model, parser and emitter.

The accepted dialect is a single flat module of cell instantiations with
named port connections::

    module top (a, b, y);
      input a, b;
      output y;
      wire n1;
      nand2 g1 (.a(a), .b(b), .y(n1));
      inv g2 (.a(n1), .y(y));
    endmodule

The module header may be omitted, in which case primary inputs are the nets
that are read but never driven and primary outputs the nets that are driven
but never read.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .errors import (BehavioralConstruct, DanglingPin, MultipleDrivers, ParseError,
                     UnknownCellType)
from .library import CellLibrary

CONST0 = "1'b0"
CONST1 = "1'b1"
CONSTANTS = (CONST0, CONST1)


@dataclass(frozen=True)
class Cell:
    name: str
    type: str
    pins: Mapping[str, str]  # pin -> net


@dataclass(frozen=True)
class Netlist:
    name: str
    library: CellLibrary = field(repr=False)
    cells: tuple[Cell, ...]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    wires: frozenset[str] = frozenset()
    clocks: frozenset[str] = frozenset()
    resets: frozenset[str] = frozenset()

    def __post_init__(self):
        self.validate()

    @cached_property
    def cell_map(self) -> dict[str, Cell]:
        return {c.name: c for c in self.cells}

    @cached_property
    def nets(self) -> frozenset[str]:
        nets = set(self.inputs) | set(self.outputs) | set(self.wires)
        for c in self.cells:
            nets.update(c.pins.values())
        return frozenset(nets)

    @cached_property
    def drivers(self) -> dict[str, str]:
        """net -> driving cell instance name (primary inputs and constants are absent)."""
        return {c.pins[self.library[c.type].output]: c.name for c in self.cells}

    @property
    def constants(self) -> frozenset[str]:
        return self.nets & frozenset(CONSTANTS)

    def validate(self) -> None:
        if len(set(c.name for c in self.cells)) != len(self.cells):
            seen, dup = set(), None
            for c in self.cells:
                if c.name in seen:
                    dup = c.name
                seen.add(c.name)
            raise ParseError(f"duplicate instance name {dup}")
        both = set(self.inputs) & set(self.outputs)
        if both:
            raise ParseError(f"nets declared both input and output: {sorted(both)}")
        driven: dict[str, str] = {}
        for net in self.inputs:
            driven[net] = "<primary input>"
        for net in CONSTANTS:
            driven[net] = "<constant>"
        for c in self.cells:
            if c.type not in self.library:
                raise UnknownCellType(f"instance {c.name}: cell type {c.type!r} not in library")
            ct = self.library[c.type]
            declared = set(ct.inputs) | {ct.output}
            extra = set(c.pins) - declared
            if extra:
                raise ParseError(f"instance {c.name}: {c.type} has no pin(s) {sorted(extra)}")
            for pin in sorted(declared):
                if not c.pins.get(pin):
                    raise DanglingPin(f"instance {c.name}: pin {pin} is unconnected")
            out = c.pins[ct.output]
            if out in driven:
                raise MultipleDrivers(f"net {out} driven by {driven[out]} and {c.name}")
            driven[out] = c.name
        for c in self.cells:
            ct = self.library[c.type]
            for pin in ct.inputs:
                if c.pins[pin] not in driven:
                    raise DanglingPin(f"instance {c.name}: pin {pin} reads undriven net {c.pins[pin]}")
        for net in self.outputs:
            if net not in driven:
                raise DanglingPin(f"primary output {net} is undriven")

    def replace(self, **changes) -> "Netlist":
        fields = dict(name=self.name, library=self.library, cells=self.cells, inputs=self.inputs,
                      outputs=self.outputs, wires=self.wires, clocks=self.clocks, resets=self.resets)
        fields.update(changes)
        return Netlist(**fields)


# -- lexer -----------------------------------------------------------------

_LEX = re.compile(r"""
    (?P<ws>\s+)
  | (?P<escaped>\\\S+)
  | (?P<number>\d*'[bBhHdDoO][0-9a-fA-FxXzZ_]+ | \d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<punct>[()\[\]{},;:.#=])
""", re.VERBOSE)

_BEHAVIORAL = {"assign", "always", "initial", "reg", "function", "task", "generate",
               "always_ff", "always_comb"}


def _strip_comments(text: str) -> str:
    text = re.sub(r"/\*.*?\*/", " ", text, flags=re.S)
    return re.sub(r"//[^\n]*", " ", text)


def _lex(text: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _LEX.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group()))
    return tokens


def normalize_name(raw: str) -> str:
    """Flatten escaped and bus-bit identifiers: ``a[3]`` -> ``a_3_``."""
    name = raw[1:] if raw.startswith("\\") else raw
    return re.sub(r"[^A-Za-z0-9_$]", "_", name)


def _const_value(tok: str) -> str:
    digits = tok.split("'", 1)[1][1:].replace("_", "")
    try:
        value = int(digits, {"b": 2, "h": 16, "d": 10, "o": 8}[tok.split("'", 1)[1][0].lower()])
    except ValueError:
        raise ParseError(f"unsupported constant {tok}") from None
    if value not in (0, 1):
        raise ParseError(f"multi-bit constant {tok} on a scalar pin")
    return CONST1 if value else CONST0


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0
        self.raw_names: dict[str, str] = {}

    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else (None, None)

    def take(self, value=None):
        kind, tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        if value is not None and tok != value:
            raise ParseError(f"expected {value!r}, found {tok!r}")
        self.pos += 1
        return kind, tok

    def name(self, raw: str) -> str:
        flat = normalize_name(raw)
        raw = raw.lstrip("\\")
        prev = self.raw_names.setdefault(flat, raw)
        if prev != raw:
            raise ParseError(f"identifiers {prev!r} and {raw!r} both flatten to {flat!r}")
        return flat

    def identifier(self) -> str:
        kind, tok = self.take()
        if kind not in ("ident", "escaped"):
            raise ParseError(f"expected identifier, found {tok!r}")
        return tok

    def net_ref(self) -> str:
        kind, tok = self.peek()
        if kind == "number":
            self.take()
            if "'" not in tok:
                raise ParseError(f"bare number {tok} used as a net")
            return _const_value(tok)
        if tok == "{":
            raise ParseError("concatenations are not supported in connections")
        raw = self.identifier()
        if self.peek()[1] == "[":
            self.take("[")
            _, idx = self.take()
            if self.peek()[1] == ":":
                raise ParseError(f"part-select {raw}[{idx}:...] not supported; flatten buses upstream")
            self.take("]")
            raw = f"{raw}[{idx}]"
        return self.name(raw)

    def range_(self):
        if self.peek()[1] != "[":
            return None
        self.take("[")
        _, msb = self.take()
        self.take(":")
        _, lsb = self.take()
        self.take("]")
        return int(msb), int(lsb)

    def declaration(self):
        _, kw = self.take()
        if self.peek()[1] in ("wire", "logic"):
            self.take()
        rng = self.range_()
        names = []
        while True:
            raw = self.identifier()
            if rng is None:
                names.append(self.name(raw))
            else:
                lo, hi = min(rng), max(rng)
                step = -1 if rng[0] > rng[1] else 1
                for i in range(rng[0], rng[1] + step, step):
                    names.append(self.name(f"{raw}[{i}]"))
                assert lo <= hi
            _, tok = self.take()
            if tok == ";":
                return kw, names
            if tok != ",":
                raise ParseError(f"unexpected {tok!r} in {kw} declaration")

    def instance(self, cell_type: str):
        if self.peek()[1] == "#":
            raise ParseError(f"parameterized instance of {cell_type} not supported")
        inst = self.name(self.identifier())
        self.take("(")
        pins: dict[str, str] = {}
        if self.peek()[1] != ")":
            while True:
                if self.peek()[1] != ".":
                    raise ParseError(f"instance {inst}: positional connections are not supported")
                self.take(".")
                pin = self.identifier()
                self.take("(")
                if self.peek()[1] == ")":
                    raise DanglingPin(f"instance {inst}: pin {pin} is unconnected")
                net = self.net_ref()
                self.take(")")
                if pin in pins:
                    raise ParseError(f"instance {inst}: pin {pin} connected twice")
                pins[pin] = net
                _, tok = self.take()
                if tok == ")":
                    break
                if tok != ",":
                    raise ParseError(f"instance {inst}: unexpected {tok!r}")
        else:
            self.take(")")
        self.take(";")
        return Cell(inst, cell_type, pins)


def parse_netlist(source: str, library: CellLibrary, *, clocks: Iterable[str] = (),
                  resets: Iterable[str] = ()) -> Netlist:
    """Parse structural netlist text into a validated :class:`Netlist`.

    Clock and reset nets are the union of the ``clocks``/``resets`` arguments
    and whatever nets feed the clock/reset pins of sequential cells.
    """
    p = _Parser(_lex(_strip_comments(source)))
    name = "top"
    header = False
    cells: list[Cell] = []
    inputs: list[str] = []
    outputs: list[str] = []
    wires: set[str] = set()
    while p.peek()[1] is not None:
        kind, tok = p.peek()
        if tok in _BEHAVIORAL:
            raise BehavioralConstruct(f"behavioral construct {tok!r} in structural netlist")
        if tok == "module":
            p.take()
            header = True
            name = normalize_name(p.identifier())
            if p.peek()[1] == "(":
                p.take("(")
                while p.take()[1] != ")":
                    pass
            p.take(";")
        elif tok == "endmodule":
            p.take()
            if p.peek()[1] is not None:
                raise ParseError("only a single module per file is supported")
        elif tok in ("input", "output", "wire", "inout"):
            kw, names = p.declaration()
            if kw == "inout":
                raise ParseError("inout ports are not supported")
            {"input": inputs, "output": outputs}.get(kw, []).extend(names)
            if kw == "wire":
                wires.update(names)
        elif kind in ("ident", "escaped"):
            p.take()
            if tok not in library:
                raise UnknownCellType(f"cell type {tok!r} not in library")
            cells.append(p.instance(tok))
        else:
            raise ParseError(f"unexpected token {tok!r}")

    if not header:
        read, driven = set(), set()
        for c in cells:
            ct = library[c.type]
            for pin, net in c.pins.items():
                (driven if pin == ct.output else read).add(net)
        inputs = sorted(read - driven - set(CONSTANTS))
        outputs = sorted(driven - read)

    clk, rst = set(clocks), set(resets)
    for c in cells:
        seq = library[c.type].seq
        if seq is not None:
            if c.pins.get(seq.clk):
                clk.add(c.pins[seq.clk])
            if seq.rst and c.pins.get(seq.rst):
                rst.add(c.pins[seq.rst])
    port_set = set(inputs) | set(outputs)
    return Netlist(name, library, tuple(cells), tuple(inputs), tuple(outputs),
                   frozenset(wires - port_set), frozenset(clk - set(CONSTANTS)),
                   frozenset(rst - set(CONSTANTS)))


def emit_netlist(n: Netlist) -> str:
    """Render ``n`` as structural text; cells sorted by instance name."""
    lines = [f"module {n.name} (" + ", ".join(list(n.inputs) + list(n.outputs)) + ");"]
    for kw, nets in (("input", n.inputs), ("output", n.outputs)):
        for net in nets:
            lines.append(f"  {kw} {net};")
    ports = set(n.inputs) | set(n.outputs) | set(CONSTANTS)
    for net in sorted(n.nets - ports):
        lines.append(f"  wire {net};")
    for c in sorted(n.cells, key=lambda c: c.name):
        ct = n.library[c.type]
        order = list(ct.inputs) + [ct.output]
        conns = ", ".join(f".{pin}({c.pins[pin]})" for pin in order)
        lines.append(f"  {c.type} {c.name} ({conns});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def read_netlist(path, library: CellLibrary, **kwargs) -> Netlist:
    with open(path) as fh:
        return parse_netlist(fh.read(), library, **kwargs)
