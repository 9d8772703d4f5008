"""Automated Trojan insertion for pseudo-self-referencing training data.

Each Trojan taps rare nets of the host design (its trigger), combines them in
a randomised gate tree, optionally drives a counter or FSM, and flips a victim
net through an XOR splice (denial-of-service payload).
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .builder import CircuitBuilder
from .errors import (InsufficientCandidates, LibraryMissingSequentialCell, NameCollision,
                     NoValidPayload, Undecided)
from .features import FeatureTable
from .hypergraph import Hypergraph, build_hypergraph
from .library import X, CellLibrary
from .netlist import Cell, Netlist
from .sim import comb_eval, free_sources, observation_points
from .testability import FULL_SCAN, NetProbability, compute_scoap

log = logging.getLogger(__name__)

TROJAN_PREFIX = "troj_"
COMB, SEQ = "comb", "seq"
DEFAULT_THRESHOLDS = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class TriggerSpec:
    trigger_count: int
    rarity_threshold: float
    trigger_nets: tuple[tuple[str, int], ...]  # (net, rare value)
    tree_seed: int = 0


@dataclass(frozen=True)
class Subcircuit:
    cells: tuple[Cell, ...]
    nets: tuple[str, ...]
    output: str


@dataclass(frozen=True)
class TrojanInstance:
    kind: str
    trigger: TriggerSpec
    payload_net: str
    cells: tuple[Cell, ...]
    trojan_nets: tuple[str, ...]
    output_net: str
    seq_params: Mapping | None = None
    witness: Mapping[str, int] | None = None

    @property
    def inserted_cells(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.cells)

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "trojan_nets": sorted(self.trojan_nets),
            "trigger_nets": [[n, v] for n, v in self.trigger.trigger_nets],
            "rarity_threshold": self.trigger.rarity_threshold,
            "payload_net": self.payload_net,
            "output_net": self.output_net,
            "inserted_cells": sorted(self.inserted_cells),
            "seq_params": dict(self.seq_params) if self.seq_params else None,
            "witness": dict(sorted(self.witness.items())) if self.witness else None,
        }


# -- trigger selection -------------------------------------------------------

def select_trigger_candidates(probs: Mapping[str, NetProbability], threshold: float, *,
                              exclude: Sequence[str] = (), reserved_prefix: str = TROJAN_PREFIX,
                              minimum: int = 1) -> list[tuple[str, int]]:
    """Nets whose rarer logic level has probability below ``threshold``.

    Returns ``(net, rare_value)`` pairs sorted by rarity, rarest first.
    Nets that are constant under the probability model (p = 0 or 1) are
    skipped since no input vector can toggle them.
    """
    if not 0 < threshold < 0.5:
        raise ValueError("threshold must lie in (0, 0.5)")
    skip = set(exclude)
    found = []
    for net, p in probs.items():
        if net in skip or net.startswith(reserved_prefix):
            continue
        rare_p = min(p.p1, 1.0 - p.p1)
        if 0.0 < rare_p < threshold:
            found.append((rare_p, net, 1 if p.p1 < 0.5 else 0))
    found.sort()
    if len(found) < minimum:
        raise InsufficientCandidates(
            f"{len(found)} nets below rarity threshold {threshold:g}, need {minimum}")
    return [(net, v) for _, net, v in found]


# -- trigger validation (full-scan justification) -----------------------------

@dataclass
class Justification:
    satisfiable: bool
    witness: dict[str, int] | None
    method: str  # "justify" | "random"


def _justify(h: Hypergraph, targets: Sequence[tuple[str, int]], cc, backtrack_limit: int):
    """PODEM-style search over the free sources of the targets' fanin cone.

    Returns (True, assignment), (False, None) when the search space is
    exhausted, or None when the backtrack budget runs out.
    """
    cone = h.comb_fanin_cone([n for n, _ in targets])
    cone_idx = {h.index[n] for n in cone}
    ops = [op for op in h.comb_ops if op.out in cone_idx]
    by_out = {op.out: op for op in ops}
    support = sorted(i for i in cone_idx if i not in by_out)
    consts = {h.index[c]: int(c.endswith("1")) for c in h.constants if c in cone}
    goal = [(h.index[n], v) for n, v in targets]
    val = {}

    def imply(assign):
        for i in support:
            val[i] = consts.get(i, assign.get(i, X))
        for op in ops:
            val[op.out] = op.type.eval3([val[i] for i in op.ins])

    def backtrace(net, v):
        while net in by_out:
            op = by_out[net]
            ins = [val[i] for i in op.ins]
            best, best_cost = None, None
            for cube in op.type.cubes[v]:
                if any(ins[p] != X and ins[p] != lit for p, lit in cube):
                    continue
                free = [(p, lit) for p, lit in cube if ins[p] == X]
                if not free:
                    continue
                cost = sum(cc[lit][op.ins[p]] for p, lit in free)
                if best is None or cost < best_cost:
                    best, best_cost = free, cost
            if best is None:
                return None
            # hardest literal first: failing early prunes the search
            p, lit = max(best, key=lambda pl: (cc[pl[1]][op.ins[pl[0]]], -pl[0]))
            net, v = op.ins[p], lit
        return net, v

    assign: dict[int, int] = {}
    stack: list[tuple[int, bool]] = []  # (source index, already flipped)
    backtracks = 0
    while True:
        imply(assign)
        status = "ok"
        for i, v in goal:
            if val[i] == 1 - v:
                status = "conflict"
                break
        if status == "ok" and all(val[i] == v for i, v in goal):
            witness = {h.net_names[i]: assign.get(i, 0) for i in support if i not in consts}
            return True, witness
        if status == "ok":
            i, v = next((i, v) for i, v in goal if val[i] == X)
            step = backtrace(i, v)
            if step is None or step[0] in consts or step[0] in assign:
                status = "conflict"
            else:
                assign[step[0]] = step[1]
                stack.append((step[0], False))
                continue
        # conflict: flip the most recent unflipped decision
        while stack:
            src, flipped = stack.pop()
            if not flipped:
                backtracks += 1
                if backtracks > backtrack_limit:
                    return None
                assign[src] = 1 - assign[src]
                stack.append((src, True))
                break
            del assign[src]
        else:
            return False, None


def validate_trigger(h: Hypergraph, t: TriggerSpec | Sequence[tuple[str, int]], *,
                     support_budget: int = 64, backtrack_limit: int = 2000,
                     random_vectors: int = 1 << 14, rng: random.Random | None = None,
                     scoap=None) -> Justification:
    """Check that every trigger net can hold its rare value simultaneously.

    Flop outputs are free (full-scan). Raises :class:`Undecided` when neither
    the bounded search nor random simulation settles the question.
    """
    targets = list(t.trigger_nets if isinstance(t, TriggerSpec) else t)
    cone = h.comb_fanin_cone([n for n, _ in targets])
    support = [n for n in cone if n not in h.driver or h.is_flop(h.driver[n])]
    if len(support) <= support_budget:
        if scoap is None:
            scoap = compute_scoap(h, FULL_SCAN)
        cc = [[0] * len(h.net_names), [0] * len(h.net_names)]
        for net, s in scoap.items():
            cc[0][h.index[net]], cc[1][h.index[net]] = s.cc0, s.cc1
        res = _justify(h, targets, cc, backtrack_limit)
        if res is not None:
            return Justification(res[0], res[1], "justify")
    rng = rng or random.Random(0)
    free = [n for n in free_sources(h) if n in cone]
    width = 1024
    for _ in range(max(1, random_vectors // width)):
        words = {n: rng.getrandbits(width) for n in free}
        vals = comb_eval(h, words, width)
        hit = (1 << width) - 1
        for net, v in targets:
            w = vals[h.index[net]]
            hit &= w if v else ~w
        if hit:
            lane = (hit & -hit).bit_length() - 1
            return Justification(True, {n: (words[n] >> lane) & 1 for n in free}, "random")
    raise Undecided(f"trigger set {targets} neither justified nor hit by random simulation")


# -- Trojan construction ----------------------------------------------------------

def build_combinational_trojan(t: TriggerSpec, seed: int, library: CellLibrary, *,
                               prefix: str = TROJAN_PREFIX,
                               gates: Sequence[str] = ("and", "nand", "nor", "or")) -> Subcircuit:
    """Random gate tree whose output is 1 exactly when every trigger is at its rare value.

    Each intermediate node is tracked as either the AND of its trigger
    literals (positive) or its complement (negative); inverters are added
    only where a gate's input polarity demands it.
    """
    rng = random.Random(seed)
    b = CircuitBuilder(library, prefix=prefix + "n")
    nodes = [(net, bool(v)) for net, v in t.trigger_nets]
    rng.shuffle(nodes)
    first = True
    while len(nodes) > 1:
        cap = min(4, len(nodes))
        if first and len(nodes) >= 3:
            cap = min(cap, len(nodes) - 1)  # at least two levels
        first = False
        k = rng.randint(2, cap)
        group, nodes = nodes[:k], nodes[k:]
        kind = rng.choice(list(gates))
        want_positive = kind in ("and", "nand")
        ins = [net if pos == want_positive else b.gate("inv", [net]) for net, pos in group]
        out = b.gate(kind, ins)
        nodes.insert(rng.randrange(len(nodes) + 1), (out, kind in ("and", "nor")))
    net, pos = nodes[0]
    if not pos:
        net = b.gate("inv", [net])
    elif net in {n for n, _ in t.trigger_nets}:
        net = b.gate("buf", [net])
    return Subcircuit(tuple(b.cells), tuple(b.nets), net)


def build_sequential_trojan(t: TriggerSpec, seq_params: Mapping, seed: int,
                            library: CellLibrary, *, clock: str, reset: str | None = None,
                            prefix: str = TROJAN_PREFIX) -> tuple[Subcircuit, dict]:
    """Trigger tree feeding a counter or FSM; the output asserts in one designated state.

    ``seq_params`` holds ``{"type": "counter", "width": k}`` (optionally
    ``"max"``) or ``{"type": "fsm", "states": n}``. Returns the subcircuit and
    the completed parameters (chosen maximum, transition table).
    """
    if library.dff(with_reset=reset is not None) is None:
        raise LibraryMissingSequentialCell("library has no flip-flop for sequential Trojans")
    rng = random.Random(seed)
    tree = build_combinational_trojan(t, rng.getrandbits(32), library, prefix=prefix)
    b = CircuitBuilder(library, prefix=prefix + "s")
    trig = tree.output
    params = dict(seq_params)
    if params.get("type", "counter") == "counter":
        width = int(params.get("width", 2))
        if not 2 <= width <= 8:
            raise ValueError("counter width must be within [2, 8]")
        top = int(params.get("max", rng.randint(1, (1 << width) - 1)))
        q = [b.fresh() for _ in range(width)]
        carry = trig
        for i in range(width):
            b.dff(b.gate("xor", [q[i], carry]), clock, reset, q=q[i])
            if i + 1 < width:
                carry = b.gate("and", [carry, q[i]])
        out = _match(b, q, top)
        params.update(type="counter", width=width, max=top)
    else:
        n = int(params.get("states", 3))
        if not 3 <= n <= 8:
            raise ValueError("FSM state count must be within [3, 8]")
        bits = max(1, math.ceil(math.log2(n)))
        # trigger walks a random path 0 -> ... -> assert state; otherwise stay or fall back to 0
        order = [0] + rng.sample(range(1, n), n - 1)
        on_trig = {order[i]: order[min(i + 1, n - 1)] for i in range(n)}
        on_idle = {s: (s if rng.random() < 0.5 else 0) for s in range(n)}
        assert_state = order[-1]
        q = [b.fresh() for _ in range(bits)]
        ntrig = b.gate("inv", [trig])
        nq = [b.gate("inv", [x]) for x in q]
        terms = {j: [] for j in range(bits)}
        for s in range(1 << bits):
            for tv in (0, 1):
                nxt = (on_trig if tv else on_idle).get(s, 0)
                lits = [q[i] if (s >> i) & 1 else nq[i] for i in range(bits)]
                lits.append(trig if tv else ntrig)
                for j in range(bits):
                    if (nxt >> j) & 1:
                        terms[j].append(lits)
        for j in range(bits):
            minterms = [b.gate("and", lits) for lits in terms[j]]
            d = b.gate("or", minterms) if minterms else "1'b0"
            b.dff(d, clock, reset, q=q[j])
        out = _match(b, q, assert_state)
        params.update(type="fsm", states=n, assert_state=assert_state,
                      on_trigger=on_trig, on_idle=on_idle)
    cells = tree.cells + tuple(b.cells)
    return Subcircuit(cells, tree.nets + tuple(b.nets), out), params


def _match(b: CircuitBuilder, bits: list[str], value: int) -> str:
    lits = [x if (value >> i) & 1 else b.gate("inv", [x]) for i, x in enumerate(bits)]
    return b.gate("and", lits)


# -- payload and insertion -----------------------------------------------------------

def select_payload(h: Hypergraph, features: FeatureTable, trigger_cone: set[str],
                   rng: random.Random, *, exclude: Sequence[str] = ()) -> str:
    """Pick an easily observed victim net outside the trigger fanin cone."""
    candidates = _payload_candidates(h, features, trigger_cone, exclude)
    if not candidates:
        raise NoValidPayload("no observable net outside the trigger cone")
    return rng.choice(candidates)


def _payload_candidates(h, features: FeatureTable, trigger_cone, exclude=()) -> list[str]:
    far = features.unreachable
    co = {n: features.get(n, "co_fs") for n in features.nets}
    finite = sorted(v for v in co.values() if v < 2**31 - 1)
    if not finite:
        return []
    median = finite[(len(finite) - 1) // 2]
    skip = set(exclude) | set(trigger_cone) | set(h.netlist.clocks) | set(h.netlist.resets)
    skip |= set(h.inputs) | set(h.constants)
    out = []
    for net in features.nets:
        if net in skip or not h.sinks.get(net):
            continue
        if features.get(net, "dist_po") >= far or co[net] > median:
            continue
        if any(not _is_data_pin(h, c, p) for c, p in h.sinks[net]):
            continue
        out.append(net)
    return sorted(out)


def _is_data_pin(h: Hypergraph, cell: str, pin: str) -> bool:
    seq = h.netlist.library[h.netlist.cell_map[cell].type].seq
    return seq is None or pin == seq.d


def insert_trojan(n: Netlist, troj: TrojanInstance) -> Netlist:
    """Add the Trojan cells and reroute the victim's readers through an XOR."""
    existing = set(n.nets) | set(n.cell_map)
    clash = ({c.name for c in troj.cells} | set(troj.trojan_nets)) & existing
    if clash:
        raise NameCollision(f"Trojan names already used in host: {sorted(clash)[:5]}")
    victim = troj.payload_net
    xor_cell = next(c for c in troj.cells if c.pins.get(_out_pin(n, c)) != troj.output_net
                    and troj.output_net in c.pins.values() and victim in c.pins.values())
    spliced = xor_cell.pins[_out_pin(n, xor_cell)]
    host = []
    for c in n.cells:
        out_pin = _out_pin(n, c)
        if any(net == victim and pin != out_pin for pin, net in c.pins.items()):
            c = Cell(c.name, c.type, {pin: (spliced if net == victim and pin != out_pin else net)
                                      for pin, net in c.pins.items()})
        host.append(c)
    return n.replace(cells=tuple(host) + tuple(troj.cells))


def _out_pin(n: Netlist, c: Cell) -> str:
    return n.library[c.type].output


def make_instance(n: Netlist, kind: str, trigger: TriggerSpec, sub: Subcircuit, payload: str,
                  *, prefix: str = TROJAN_PREFIX, seq_params=None, witness=None) -> TrojanInstance:
    """Wrap a built subcircuit with its payload XOR into a :class:`TrojanInstance`."""
    b = CircuitBuilder(n.library, prefix=prefix + "p")
    b.gate("xor", [payload, sub.output])
    cells = sub.cells + tuple(b.cells)
    nets = tuple(sub.nets) + tuple(b.nets)
    return TrojanInstance(kind, trigger, payload, cells, nets, sub.output,
                          seq_params, witness)


# -- activation / stealth checks --------------------------------------------------

def activation_visible(clean: Hypergraph, infected: Hypergraph, troj: TrojanInstance,
                       rng: random.Random, lanes: int = 256) -> bool:
    """Full-scan check: with the trigger justified, some observation point differs."""
    free = free_sources(infected)
    words = {s: rng.getrandbits(lanes) for s in free}
    mask = (1 << lanes) - 1
    for net, v in (troj.witness or {}).items():
        words[net] = mask if v else 0
    if troj.kind == SEQ:
        _force_assert_state(infected, troj, words, mask)
    a = comb_eval(clean, {k: v for k, v in words.items() if k in clean.index}, lanes)
    b = comb_eval(infected, words, lanes)
    active = b[infected.index[troj.output_net]]
    if not active:
        return False
    for net in observation_points(clean):
        if net in infected.index and (a[clean.index[net]] ^ b[infected.index[net]]) & active:
            return True
    return False


def _force_assert_state(h: Hypergraph, troj: TrojanInstance, words, mask):
    """Load the Trojan's own flops with the asserting state (they are scan-free sources)."""
    p = troj.seq_params or {}
    target = p.get("max") if p.get("type") == "counter" else p.get("assert_state")
    qs = [c.pins[h.netlist.library[c.type].seq.q] for c in troj.cells
          if h.netlist.library[c.type].is_sequential]
    for i, q in enumerate(qs):
        words[q] = mask if (target >> i) & 1 else 0


def inactive_equivalent(clean: Hypergraph, infected: Hypergraph, troj: TrojanInstance,
                        vectors: int, rng: random.Random) -> bool:
    """Dual simulation: wherever the Trojan output is 0 the observable behaviour matches."""
    width = 1024
    mask = (1 << width) - 1
    for start in range(0, vectors, width):
        lanes = min(width, vectors - start)
        m = (1 << lanes) - 1
        words = {s: rng.getrandbits(lanes) for s in free_sources(infected)}
        a = comb_eval(clean, {k: v for k, v in words.items() if k in clean.index}, lanes)
        b = comb_eval(infected, words, lanes)
        quiet = ~b[infected.index[troj.output_net]] & m & mask
        for net in observation_points(clean):
            if (a[clean.index[net]] ^ b[infected.index[net]]) & quiet:
                return False
    return True


# -- training-set generation -----------------------------------------------------

@dataclass
class InjectorConfig:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    draws_per_threshold: int = 30
    payload_attempts: int = 8
    support_budget: int = 64
    backtrack_limit: int = 2000
    prefix: str = TROJAN_PREFIX
    counter_widths: tuple[int, int] = (2, 4)
    fsm_states: tuple[int, int] = (3, 6)
    exclude: tuple[str, ...] = field(default_factory=tuple)


def _draw_trigger_set(h: Hypergraph, cands, count: int, rng: random.Random,
                      cfg: "InjectorConfig", scoap):
    """Grow a jointly satisfiable trigger set one random candidate at a time.

    Drawing all nets at once almost always yields a contradictory set when
    the trigger count is large, so each addition is justified before it is kept.
    """
    order = rng.sample(cands, len(cands))
    picked: list[tuple[str, int]] = []
    just = None
    budget = 4 * count + 40
    for net in order:
        if budget == 0:
            break
        budget -= 1
        trial = picked + [net]
        try:
            res = validate_trigger(h, trial, support_budget=cfg.support_budget,
                                   backtrack_limit=cfg.backtrack_limit, rng=rng, scoap=scoap)
        except Undecided:
            continue
        if res.satisfiable:
            picked, just = trial, res
            if len(picked) == count:
                return sorted(picked), just
    return None


def generate_one(n: Netlist, kind: str, trigger_count: int, seed: int, *,
                 h: Hypergraph | None = None, features: FeatureTable | None = None,
                 probs=None, cfg: InjectorConfig | None = None) -> tuple[Netlist, TrojanInstance]:
    """Insert one validated Trojan, sweeping the rarity threshold upwards as needed."""
    from .features import extract_features  # local: features imports nothing from here
    from .testability import compute_probabilities, default_bias

    cfg = cfg or InjectorConfig()
    rng = random.Random(seed)
    h = h or build_hypergraph(n)
    features = features or extract_features(h)
    probs = probs or compute_probabilities(h, default_bias(h))
    scoap = compute_scoap(h, FULL_SCAN)
    exclude = set(cfg.exclude) | set(n.clocks) | set(n.resets) | set(n.constants)
    last_error: Exception | None = None
    for threshold in cfg.thresholds:
        try:
            cands = select_trigger_candidates(probs, threshold, exclude=sorted(exclude),
                                              reserved_prefix=cfg.prefix, minimum=trigger_count)
        except InsufficientCandidates as exc:
            last_error = exc
            log.debug("threshold %g: %s", threshold, exc)
            continue
        for _ in range(cfg.draws_per_threshold):
            drawn = _draw_trigger_set(h, cands, trigger_count, rng, cfg, scoap)
            if drawn is None:
                continue
            picked, just = drawn
            trig = TriggerSpec(trigger_count, threshold, tuple(picked), rng.getrandbits(32))
            cone = h.comb_fanin_cone([net for net, _ in picked])
            try:
                payloads = _payload_candidates(h, features, cone, exclude)
            except NoValidPayload:
                payloads = []
            if not payloads:
                last_error = NoValidPayload("no payload outside the trigger cone")
                continue
            for _ in range(cfg.payload_attempts):
                victim = rng.choice(payloads)
                if kind == COMB:
                    sub = build_combinational_trojan(trig, trig.tree_seed, n.library,
                                                     prefix=cfg.prefix)
                    params = None
                else:
                    if not n.clocks:
                        raise LibraryMissingSequentialCell("design has no clock for sequential Trojans")
                    if rng.random() < 0.5:
                        sp = {"type": "counter", "width": rng.randint(*cfg.counter_widths)}
                    else:
                        sp = {"type": "fsm", "states": rng.randint(*cfg.fsm_states)}
                    reset = min(n.resets) if n.resets else None
                    sub, params = build_sequential_trojan(trig, sp, trig.tree_seed, n.library,
                                                          clock=min(n.clocks), reset=reset,
                                                          prefix=cfg.prefix)
                troj = make_instance(n, kind, trig, sub, victim, prefix=cfg.prefix,
                                     seq_params=params, witness=just.witness)
                infected = insert_trojan(n, troj)
                hi = build_hypergraph(infected)
                if activation_visible(h, hi, troj, rng):
                    return infected, troj
            last_error = NoValidPayload("payload effect never reached an observation point")
    if isinstance(last_error, NoValidPayload):
        raise last_error
    raise InsufficientCandidates(
        f"no valid {trigger_count}-trigger set up to threshold {cfg.thresholds[-1]:g}")


def generate_training_set(n: Netlist, kind: str, trigger_count: int, instances: int = 50,
                          seed: int = 0, cfg: InjectorConfig | None = None
                          ) -> list[tuple[Netlist, TrojanInstance]]:
    """``instances`` independently drawn Trojan-inserted variants of ``n``."""
    from .features import extract_features
    from .testability import compute_probabilities, default_bias

    h = build_hypergraph(n)
    features = extract_features(h)
    probs = compute_probabilities(h, default_bias(h))
    out = []
    for i in range(instances):
        inst_seed = random.Random(f"{seed}:{kind}:{trigger_count}:{i}").getrandbits(63)
        out.append(generate_one(n, kind, trigger_count, inst_seed, h=h, features=features,
                                probs=probs, cfg=cfg))
    return out
