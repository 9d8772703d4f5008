"""Bit-parallel logic simulation over Python integers (one bit per vector)."""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from .hypergraph import Hypergraph
from .netlist import CONST1


def comb_eval(h: Hypergraph, sources: Mapping[str, int], width: int) -> list[int]:
    """Evaluate the combinational subgraph.

    ``sources`` gives a word for every primary input and flop Q net; missing
    sources default to 0. Returns one word per net index.
    """
    mask = (1 << width) - 1
    vals = [0] * len(h.net_names)
    for net, word in sources.items():
        vals[h.index[net]] = word & mask
    if CONST1 in h.index:
        vals[h.index[CONST1]] = mask
    for op in h.comb_ops:
        vals[op.out] = op.type.eval_words([vals[i] for i in op.ins], mask) & mask
    return vals


def free_sources(h: Hypergraph) -> list[str]:
    """Nets that are free under the full-scan view: PIs plus flop outputs."""
    return sorted((h.inputs | h.pseudo_inputs) - h.constants)


def observation_points(h: Hypergraph) -> list[str]:
    """POs plus flop D inputs (pseudo-POs)."""
    return sorted(h.outputs | h.pseudo_outputs)


def random_words(nets: Sequence[str], width: int, rng: random.Random) -> dict[str, int]:
    return {n: rng.getrandbits(width) for n in nets}


def seq_run(h: Hypergraph, pi_words: Sequence[Mapping[str, int]], width: int,
            watch: Sequence[str] = ()) -> list[dict[str, int]]:
    """Cycle-accurate simulation from the all-zero state.

    ``pi_words[t]`` holds the primary-input words for cycle ``t``; each bit
    lane is an independent run. Returns, per cycle, the values of ``watch``
    nets before the clock edge.
    """
    mask = (1 << width) - 1
    state = {h.net_names[f.q]: 0 for f in h.flop_ops}
    trace = []
    for words in pi_words:
        src = dict(words)
        src.update(state)
        vals = comb_eval(h, src, width)
        trace.append({n: vals[h.index[n]] for n in watch})
        nxt = {}
        for f in h.flop_ops:
            d = vals[f.d]
            q = vals[f.q]
            if f.en is not None:
                en = vals[f.en]
                d = (d & en) | (q & ~en & mask)
            if f.rst is not None:
                d &= ~vals[f.rst] & mask
            nxt[h.net_names[f.q]] = d
        state = nxt
    return trace
