"""Cell library: logical cell functions loaded from JSON.

Every combinational cell is reduced to a truth table at load time. Probability
propagation, SCOAP, three-valued implication and bit-parallel simulation all
work from that table, so no per-gate formula table is needed.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache, cached_property
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import LibraryError

MAX_CELL_INPUTS = 6
X = 2  # unknown value in three-valued logic


# -- expression parsing ----------------------------------------------------

_TOKENS = set("()!~&|^")


def _tokenize(expr: str) -> list[str]:
    out, i = [], 0
    while i < len(expr):
        ch = expr[i]
        if ch.isspace():
            i += 1
        elif ch in _TOKENS:
            out.append(ch)
            i += 1
        elif ch.isalnum() or ch == "_":
            j = i
            while j < len(expr) and (expr[j].isalnum() or expr[j] == "_"):
                j += 1
            out.append(expr[i:j])
            i = j
        else:
            raise LibraryError(f"bad character {ch!r} in expression {expr!r}")
    return out


class _ExprParser:
    # precedence: ! > & > ^ > |
    def __init__(self, expr: str):
        self.toks = _tokenize(expr)
        self.pos = 0
        self.expr = expr

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise LibraryError(f"unexpected end of expression {self.expr!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.parse_or()
        if self.peek() is not None:
            raise LibraryError(f"trailing tokens in expression {self.expr!r}")
        return node

    def _binary(self, op, sub):
        node = sub()
        while self.peek() == op:
            self.take()
            node = (op, node, sub())
        return node

    def parse_or(self):
        return self._binary("|", self.parse_xor)

    def parse_xor(self):
        return self._binary("^", self.parse_and)

    def parse_and(self):
        return self._binary("&", self.parse_unary)

    def parse_unary(self):
        tok = self.take()
        if tok in ("!", "~"):
            return ("!", self.parse_unary())
        if tok == "(":
            node = self.parse_or()
            if self.take() != ")":
                raise LibraryError(f"unbalanced parentheses in {self.expr!r}")
            return node
        if tok in ("0", "1"):
            return ("const", int(tok))
        if tok in _TOKENS:
            raise LibraryError(f"unexpected {tok!r} in {self.expr!r}")
        return ("var", tok)


def _variables(node) -> set[str]:
    if node[0] == "var":
        return {node[1]}
    if node[0] == "const":
        return set()
    return set().union(*(_variables(n) for n in node[1:]))


def _to_python(node, index: Mapping[str, int]) -> str:
    kind = node[0]
    if kind == "var":
        return f"v{index[node[1]]}"
    if kind == "const":
        return "M" if node[1] else "0"
    if kind == "!":
        return f"(M ^ {_to_python(node[1], index)})"
    return f"({_to_python(node[1], index)} {kind} {_to_python(node[2], index)})"


# -- cell types ------------------------------------------------------------

@dataclass(frozen=True)
class SeqPins:
    d: str
    q: str
    clk: str
    rst: str | None = None  # synchronous, active-high, resets Q to 0
    en: str | None = None   # active-high load enable


@dataclass(frozen=True)
class CellType:
    name: str
    inputs: tuple[str, ...]
    output: str
    expr: str | None = None
    seq: SeqPins | None = None
    truth: int = 0  # bit r set iff f(row r) = 1; bit i of r is inputs[i]
    _word_fn: object = field(default=None, repr=False, compare=False)

    @property
    def is_sequential(self) -> bool:
        return self.seq is not None

    @property
    def arity(self) -> int:
        return len(self.inputs)

    def pin_index(self, pin: str) -> int:
        return self.inputs.index(pin)

    def evaluate(self, bits: Sequence[int]) -> int:
        row = sum(b << i for i, b in enumerate(bits))
        return (self.truth >> row) & 1

    def eval_words(self, words: Sequence[int], mask: int) -> int:
        """Bit-parallel evaluation: each input is an int holding one bit per vector."""
        return self._word_fn(mask, *words)

    @cached_property
    def _onset(self) -> tuple[tuple[bool, ...], ...]:
        k = self.arity
        return tuple(tuple(bool((row >> i) & 1) for i in range(k))
                     for row in range(1 << k) if (self.truth >> row) & 1)

    def probability(self, p1: Sequence[float]) -> float:
        """Exact P(out=1) for independent inputs: sum over satisfying rows.

        Works for any numeric type, so Fraction inputs give exact rationals.
        """
        total = 0
        for row in self._onset:
            prod = 1
            for bit, p in zip(row, p1):
                prod *= p if bit else 1 - p
            total += prod
        return total

    def eval3(self, values: Sequence[int]) -> int:
        """Three-valued evaluation (0, 1, X=2) by enumerating X completions."""
        fixed = 0
        free = []
        for i, v in enumerate(values):
            if v == X:
                free.append(i)
            elif v:
                fixed |= 1 << i
        seen = 0
        for combo in range(1 << len(free)):
            row = fixed
            for j, i in enumerate(free):
                if (combo >> j) & 1:
                    row |= 1 << i
            seen |= 1 << ((self.truth >> row) & 1)
            if seen == 3:
                return X
        return 1 if seen == 2 else 0

    # SCOAP helpers --------------------------------------------------------

    @cached_property
    def _rows(self) -> list[int]:
        return [(self.truth >> r) & 1 for r in range(1 << self.arity)]

    def _prime_cubes(self, func_rows: list[int], k: int) -> list[tuple[tuple[int, int], ...]]:
        """Prime implicant cubes of the Boolean function given by func_rows over k vars."""
        implicants = set()
        for cube in itertools.product((0, 1, X), repeat=k):
            ok = True
            for row in range(1 << k):
                if all(c == X or ((row >> i) & 1) == c for i, c in enumerate(cube)):
                    if not func_rows[row]:
                        ok = False
                        break
            if ok:
                implicants.add(cube)
        primes = []
        for cube in implicants:
            if any(c != X and cube[:i] + (X,) + cube[i + 1:] in implicants
                   for i, c in enumerate(cube)):
                continue
            primes.append(tuple((i, c) for i, c in enumerate(cube) if c != X))
        return sorted(primes)

    @cached_property
    def cubes(self) -> dict[int, list[tuple[tuple[int, int], ...]]]:
        """Prime cubes producing output 0 and 1: {value: [((pin_idx, val), ...), ...]}."""
        if self.is_sequential:
            return {0: [], 1: []}
        k = self.arity
        on = self._rows
        off = [1 - v for v in on]
        return {1: self._prime_cubes(on, k), 0: self._prime_cubes(off, k)}

    @cached_property
    def sensitizing_cubes(self) -> list[list[tuple[tuple[int, int], ...]]]:
        """Per input pin, prime cubes over the other pins that make the output depend on it."""
        if self.is_sequential:
            return [[] for _ in self.inputs]
        k = self.arity
        result = []
        for i in range(k):
            others = [j for j in range(k) if j != i]
            diff = []
            for sub in range(1 << (k - 1)):
                row = 0
                for pos, j in enumerate(others):
                    if (sub >> pos) & 1:
                        row |= 1 << j
                diff.append(int(self._rows[row] != self._rows[row | (1 << i)]))
            cubes = [tuple((others[p], v) for p, v in cube)
                     for cube in self._prime_cubes(diff, k - 1)]
            result.append(sorted({c for cube in cubes for c in self._settle(cube, i)}))
        return result

    def _settle(self, cube, pin: int) -> list[tuple[tuple[int, int], ...]]:
        """Expand ``cube`` over the free side inputs the output still depends on.

        Observing a pin through XOR-like logic needs those side inputs at some
        known value, so each one is charged min(cc0, cc1) as in the classic
        XOR rule; side inputs that are masked by the cube stay free.
        """
        fixed = dict(cube)
        rows = [r for r in range(1 << self.arity)
                if all(((r >> j) & 1) == v for j, v in fixed.items())]
        live = [j for j in range(self.arity) if j != pin and j not in fixed
                and any(self._rows[r] != self._rows[r ^ (1 << j)] for r in rows)]
        out = []
        for vals in itertools.product((0, 1), repeat=len(live)):
            out.append(tuple(sorted(list(cube) + list(zip(live, vals)))))
        return out


def _make_comb(name: str, inputs: list[str], output: str, expr: str) -> CellType:
    if len(inputs) > MAX_CELL_INPUTS:
        raise LibraryError(f"cell {name}: {len(inputs)} inputs exceeds limit of {MAX_CELL_INPUTS}")
    if len(set(inputs)) != len(inputs) or output in inputs:
        raise LibraryError(f"cell {name}: duplicate pin names")
    tree = _ExprParser(expr).parse()
    unknown = _variables(tree) - set(inputs)
    if unknown:
        raise LibraryError(f"cell {name}: expression uses undeclared pins {sorted(unknown)}")
    index = {p: i for i, p in enumerate(inputs)}
    args = ", ".join(["M"] + [f"v{i}" for i in range(len(inputs))])
    fn = eval(f"lambda {args}: {_to_python(tree, index)}")  # noqa: S307 - generated from parsed AST
    k = len(inputs)
    mask = (1 << (1 << k)) - 1
    words = []
    for i in range(k):
        w = 0
        for row in range(1 << k):
            if (row >> i) & 1:
                w |= 1 << row
        words.append(w)
    truth = fn(mask, *words) & mask
    return CellType(name, tuple(inputs), output, expr=expr, truth=truth, _word_fn=fn)


def _make_seq(name: str, spec: Mapping) -> CellType:
    seq_spec = spec["seq"]
    try:
        pins = SeqPins(d=seq_spec["d"], q=seq_spec["q"], clk=seq_spec["clk"],
                       rst=seq_spec.get("rst"), en=seq_spec.get("en"))
    except KeyError as exc:
        raise LibraryError(f"sequential cell {name} lacks pin role {exc}") from None
    inputs = [pins.d, pins.clk] + [p for p in (pins.rst, pins.en) if p]
    declared = spec.get("inputs")
    if declared is not None and sorted(declared) != sorted(inputs):
        raise LibraryError(f"sequential cell {name}: inputs {declared} disagree with pin roles")
    output = spec.get("output", pins.q)
    if output != pins.q:
        raise LibraryError(f"sequential cell {name}: output must be the Q pin")
    return CellType(name, tuple(inputs), output, seq=pins)


@dataclass(frozen=True)
class CellLibrary:
    cells: Mapping[str, CellType]
    source: str = "<memory>"

    def __getitem__(self, name: str) -> CellType:
        return self.cells[name]

    def __contains__(self, name: str) -> bool:
        return name in self.cells

    @classmethod
    def from_dict(cls, data: Mapping, source: str = "<memory>") -> "CellLibrary":
        if "cells" not in data:
            raise LibraryError("library JSON needs a top-level 'cells' object")
        cells = {}
        for name, spec in data["cells"].items():
            if "outputs" in spec and len(spec["outputs"]) != 1:
                raise LibraryError(f"cell {name}: multi-output cells are not supported")
            if "seq" in spec:
                cells[name] = _make_seq(name, spec)
            else:
                output = spec.get("output") or (spec.get("outputs") or [None])[0]
                if output is None or "expr" not in spec:
                    raise LibraryError(f"cell {name}: needs 'output' and 'expr'")
                cells[name] = _make_comb(name, list(spec["inputs"]), output, spec["expr"])
        return cls(cells, source)

    @classmethod
    def load(cls, path: str | Path) -> "CellLibrary":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), str(path))

    @classmethod
    def default(cls) -> "CellLibrary":
        text = resources.files("trojanscope.data").joinpath("default_cells.json").read_text()
        return cls.from_dict(json.loads(text), "default_cells.json")

    def sequential_cells(self) -> list[CellType]:
        return [c for c in self.cells.values() if c.is_sequential]

    def find(self, kind: str, arity: int | None = None) -> str | None:
        """Name of a library cell whose function matches a named primitive, if any."""
        memo = self.__dict__.setdefault("_find_memo", {})
        key = (kind, arity)
        if key not in memo:
            memo[key] = next((c.name for c in self.cells.values()
                              if not c.is_sequential and (arity is None or c.arity == arity)
                              and c.truth == _primitive_truth(kind, c.arity)), None)
        return memo[key]

    def dff(self, with_reset: bool = False) -> CellType | None:
        best = None
        for cell in self.sequential_cells():
            if cell.seq.en is None and (cell.seq.rst is not None) == with_reset:
                return cell
            best = best or cell
        return best if not with_reset else None


@lru_cache(maxsize=None)
def _primitive_truth(kind: str, k: int) -> int:
    t = 0
    for row in range(1 << k):
        bits = [(row >> i) & 1 for i in range(k)]
        val = {
            "and": all(bits), "nand": not all(bits), "or": any(bits), "nor": not any(bits),
            "xor": sum(bits) % 2 == 1, "xnor": sum(bits) % 2 == 0,
            "inv": k == 1 and not bits[0], "buf": k == 1 and bits[0],
        }[kind]
        if val:
            t |= 1 << row
    return t
