"""Functional net features: vectorless probabilities and SCOAP measures.

Probabilities assume independent cell inputs, which is exact on fanout-free
logic and a heuristic under reconvergent fanout. SCOAP values use saturating
integer arithmetic, so sequential loops settle at ``SCOAP_CEILING`` instead of
an infinity marker, and nothing is clipped at 254.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

from .hypergraph import Hypergraph
from .netlist import CONST0, CONST1

SCOAP_CEILING = 2**31 - 1
FULL_SCAN = "full-scan"
NO_SCAN = "no-scan"


@dataclass(frozen=True)
class NetProbability:
    p1: float
    p_trans: float

    @property
    def p0(self) -> float:
        return 1.0 - self.p1


class ProbabilityMap(dict):
    """net -> NetProbability, plus convergence diagnostics of the flop iteration."""

    converged: bool = True
    residual: float = 0.0
    iterations: int = 0


def default_bias(h: Hypergraph) -> dict[str, float]:
    """Reset nets sit at their inactive level; everything else defaults to 0.5."""
    return {r: 0.0 for r in h.netlist.resets if r in h.inputs}


def _compile_probability_pass(h: Hypergraph):
    """One generated function evaluating every combinational cell's p1 in order.

    Each cell contributes the same sum-of-on-set-products as
    :meth:`CellType.probability`, with net indices baked in.
    """
    cached = getattr(h, "_prob_pass", None)
    if cached is not None:
        return cached
    lines = ["def run(p):"]
    for op in h.comb_ops:
        terms = []
        for row in op.type._onset:
            lits = [f"p[{i}]" if bit else f"(1.0 - p[{i}])" for bit, i in zip(row, op.ins)]
            terms.append(" * ".join(["1.0"] + lits))
        lines.append(f"    p[{op.out}] = " + (" + ".join(terms) if terms else "0.0"))
    lines.append("    return None")
    scope: dict = {}
    exec("\n".join(lines), scope)  # noqa: S102 - source built from integer indices only
    h._prob_pass = scope["run"]
    return h._prob_pass


def _compile_flop_step(h: Hypergraph, damping: float):
    """Generated simultaneous update of every flop output; returns the largest change."""
    keep, move = repr(1.0 - damping), repr(damping)
    lines = ["def step(p):", "    res = 0.0"]
    for k, f in enumerate(h.flop_ops):
        target = f"p[{f.d}]"
        if f.en is not None:
            target = f"(p[{f.en}] * p[{f.d}] + (1.0 - p[{f.en}]) * p[{f.q}])"
        if f.rst is not None:
            target = f"{target} * (1.0 - p[{f.rst}])"
        lines.append(f"    n{k} = {keep} * p[{f.q}] + {move} * {target}")
        lines.append(f"    d = abs(n{k} - p[{f.q}])")
        lines.append("    if d > res: res = d")
    for k, f in enumerate(h.flop_ops):
        lines.append(f"    p[{f.q}] = n{k}")
    lines.append("    return res")
    scope: dict = {}
    exec("\n".join(lines), scope)  # noqa: S102 - source built from integer indices only
    return scope["step"]


def compute_probabilities(h: Hypergraph, pi_bias: Mapping[str, float] | None = None, *,
                          damping: float = 0.5, tol: float = 1e-9, max_iter: int = 1000,
                          initial_q: Mapping[str, float] | None = None) -> ProbabilityMap:
    """Static logic-1 probability and 0->1 transition activity for every net.

    Flop outputs start at 0.5 (or ``initial_q``) and are relaxed towards the
    steady state of their next-state function with the given damping until
    the largest per-net change drops below ``tol``.
    """
    bias = dict(pi_bias or {})
    p = [0.5] * len(h.net_names)
    for net, val in bias.items():
        if net in h.index:
            p[h.index[net]] = float(val)
    if CONST0 in h.index:
        p[h.index[CONST0]] = 0.0
    if CONST1 in h.index:
        p[h.index[CONST1]] = 1.0
    for f in h.flop_ops:
        q = h.net_names[f.q]
        p[f.q] = float(initial_q[q]) if initial_q and q in initial_q else 0.5

    comb_pass = _compile_probability_pass(h)
    comb_pass(p)
    result = ProbabilityMap()
    iterations, residual = 0, 0.0
    if h.flop_ops:
        flop_step = _compile_flop_step(h, damping)
        converged = False
        while iterations < max_iter:
            iterations += 1
            residual = flop_step(p)
            comb_pass(p)
            if residual < tol:
                converged = True
                break
        if not converged:
            warnings.warn(f"flop probability iteration hit cap {max_iter} "
                          f"(residual {residual:.3g}); keeping last iterate", RuntimeWarning)
        result.converged = converged
    result.residual = residual
    result.iterations = iterations
    for i, net in enumerate(h.net_names):
        p1 = min(1.0, max(0.0, p[i]))
        result[net] = NetProbability(p1, (1.0 - p1) * p1)
    return result


# -- SCOAP -------------------------------------------------------------------

@dataclass(frozen=True)
class ScoapValues:
    cc0: int
    cc1: int
    co: int
    sc0: int = 0
    sc1: int = 0
    so: int = 0
    variant: str = FULL_SCAN


class ScoapMap(dict):
    converged: bool = True
    sweeps: int = 0


def _sat(x: int) -> int:
    return x if x < SCOAP_CEILING else SCOAP_CEILING


def _cube_cost(cubes, ins, table) -> int:
    best = SCOAP_CEILING
    for cube in cubes:
        s = 0
        for pin, val in cube:
            s += table[val][ins[pin]]
        if s < best:
            best = s
    return best


def compute_scoap(h: Hypergraph, variant: str = FULL_SCAN, *, max_sweeps: int = 100) -> ScoapMap:
    """Goldstein controllability/observability generalised through prime cubes.

    Full-scan treats flop Q as a primary input and D as a primary output.
    No-scan propagates through flops (+1 sequential level per crossing) and
    relaxes sequential loops with Gauss-Seidel sweeps.
    """
    if variant not in (FULL_SCAN, NO_SCAN):
        raise ValueError(f"unknown SCOAP variant {variant!r}")
    n = len(h.net_names)
    C = SCOAP_CEILING
    cc = [[C] * n, [C] * n]
    sc = [[C] * n, [C] * n]
    full = variant == FULL_SCAN
    sources = set(h.inputs)
    if full:
        sources |= h.pseudo_inputs
    for net in sources:
        i = h.index[net]
        cc[0][i] = cc[1][i] = 1
        sc[0][i] = sc[1][i] = 0
    for net, v in ((CONST0, 0), (CONST1, 1)):
        if net in h.index:
            i = h.index[net]
            cc[v][i], sc[v][i] = 1, 0
            cc[1 - v][i] = sc[1 - v][i] = C

    def controllability_pass() -> bool:
        changed = False
        for op in h.comb_ops:
            cubes = op.type.cubes
            for v in (0, 1):
                c = _sat(1 + _cube_cost(cubes[v], op.ins, cc))
                if c != cc[v][op.out]:
                    cc[v][op.out] = c
                    changed = True
                if not full:
                    s = _sat(_cube_cost(cubes[v], op.ins, sc))
                    if s != sc[v][op.out]:
                        sc[v][op.out] = s
                        changed = True
        return changed

    def flop_controllability() -> bool:
        changed = False
        for f in h.flop_ops:
            for table, step in ((cc, 0), (sc, 1)):
                load = (table[1][f.en] if f.en is not None else 0) + \
                       (table[0][f.rst] if f.rst is not None else 0)
                one = _sat(table[1][f.d] + load + step)
                zero = table[0][f.d] + load
                if f.rst is not None:
                    zero = min(zero, table[1][f.rst])
                zero = _sat(zero + step)
                # Q can only improve: the relaxation is monotone from the ceiling
                one, zero = min(one, table[1][f.q]), min(zero, table[0][f.q])
                if (zero, one) != (table[0][f.q], table[1][f.q]):
                    table[0][f.q], table[1][f.q] = zero, one
                    changed = True
        return changed

    controllability_pass()
    sweeps = 1
    converged = True
    if not full and h.flop_ops:
        converged = False
        while sweeps < max_sweeps:
            if not flop_controllability():
                converged = True
                break
            controllability_pass()
            sweeps += 1

    co = [C] * n
    so = [C] * n
    for net in h.outputs:
        co[h.index[net]] = so[h.index[net]] = 0

    def flop_observability() -> bool:
        changed = False
        for f in h.flop_ops:
            if full:
                oq, soq, cq = 0, 0, (1, 1)
            else:
                oq, soq, cq = co[f.q], so[f.q], (cc[0][f.q], cc[1][f.q])
            en1 = cc[1][f.en] if f.en is not None else 0
            rst0 = cc[0][f.rst] if f.rst is not None else 0
            s_en1 = sc[1][f.en] if f.en is not None and not full else 0
            s_rst0 = sc[0][f.rst] if f.rst is not None and not full else 0
            step = 0 if full else 1
            cand = [(f.d, _sat(oq + en1 + rst0), _sat(soq + s_en1 + s_rst0 + step))]
            if f.en is not None:
                sens = min(cc[0][f.d] + cq[1], cc[1][f.d] + cq[0])
                cand.append((f.en, _sat(oq + sens + rst0), _sat(soq + s_rst0 + step)))
            if f.rst is not None:
                sens = cc[1][f.d] + en1
                if f.en is not None:
                    sens = min(sens, cc[0][f.en] + cq[1])
                cand.append((f.rst, _sat(oq + sens), _sat(soq + step)))
            if full:
                cand = [(i, c, 0) for i, c, _ in cand]
            for i, c, s in cand:
                if c < co[i]:
                    co[i] = c
                    changed = True
                if not full and s < so[i]:
                    so[i] = s
                    changed = True
        return changed

    def observability_pass() -> bool:
        changed = False
        for op in reversed(h.comb_ops):
            o_out = co[op.out]
            s_out = so[op.out]
            for pin, src in enumerate(op.ins):
                sens = op.type.sensitizing_cubes[pin]
                c = _sat(o_out + _cube_cost(sens, op.ins, cc) + 1)
                if c < co[src]:
                    co[src] = c
                    changed = True
                if not full:
                    s = _sat(s_out + _cube_cost(sens, op.ins, sc))
                    if s < so[src]:
                        so[src] = s
                        changed = True
        return changed

    if full:
        flop_observability()
        observability_pass()
    else:
        observability_pass()
        obs_sweeps = 1
        while obs_sweeps < max_sweeps:
            if not flop_observability():
                break
            observability_pass()
            obs_sweeps += 1
        else:
            converged = False
        sweeps = max(sweeps, obs_sweeps)

    if not converged:
        warnings.warn(f"no-scan SCOAP relaxation hit cap of {max_sweeps} sweeps; "
                      "values left saturated", RuntimeWarning)
    result = ScoapMap()
    result.converged = converged
    result.sweeps = sweeps
    for i, net in enumerate(h.net_names):
        if full:
            result[net] = ScoapValues(cc[0][i], cc[1][i], co[i], 0, 0, 0, variant)
        else:
            result[net] = ScoapValues(cc[0][i], cc[1][i], co[i], sc[0][i], sc[1][i], so[i], variant)
    return result


@dataclass(frozen=True)
class ControllabilityNorm:
    net_cc: float
    net_sc: float


def controllability_norms(s: Mapping[str, ScoapValues]) -> dict[str, ControllabilityNorm]:
    return {net: ControllabilityNorm(math.hypot(v.cc0, v.cc1), math.hypot(v.sc0, v.sc1))
            for net, v in s.items()}
