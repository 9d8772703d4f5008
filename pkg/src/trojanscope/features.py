"""Per-net feature table combining functional and structural features."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .hypergraph import Hypergraph
from .structural import compute_structural, unreachable
from .testability import (FULL_SCAN, NO_SCAN, compute_probabilities, compute_scoap,
                          default_bias)

FUNCTIONAL = ("p1", "p_trans", "cc0_fs", "cc1_fs", "co_fs",
              "cc0_ns", "cc1_ns", "co_ns", "sc0_ns", "sc1_ns", "so_ns")
STRUCTURAL = ("fanin_l1", "fanout_l1", "fanin_l2", "fanout_l2",
              "dist_ff_d", "dist_ff_q", "dist_pi", "dist_po")
FEATURE_NAMES = FUNCTIONAL + STRUCTURAL


@dataclass
class FeatureTable:
    nets: list[str]
    columns: tuple[str, ...]
    values: np.ndarray  # (n_nets, n_columns), float64
    unreachable: int = 0
    converged: bool = True

    def __post_init__(self):
        self._row = {n: i for i, n in enumerate(self.nets)}

    def __len__(self) -> int:
        return len(self.nets)

    def row(self, net: str) -> np.ndarray:
        return self.values[self._row[net]]

    def get(self, net: str, column: str) -> float:
        return float(self.values[self._row[net], self.columns.index(column)])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def subset(self, nets: Sequence[str]) -> "FeatureTable":
        idx = [self._row[n] for n in nets]
        return FeatureTable(list(nets), self.columns, self.values[idx], self.unreachable,
                            self.converged)

    def select(self, columns: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.columns.index(c) for c in columns]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("net",) + self.columns)
        for net, row in zip(self.nets, self.values):
            w.writerow([net] + [_fmt(c, v) for c, v in zip(self.columns, row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, unreachable: int = 0) -> "FeatureTable":
        """Parse :meth:`to_csv` output; the distance sentinel is not stored in the file."""
        lines = text.splitlines()
        far = unreachable
        if lines and lines[0].startswith("#"):
            far = int(lines[0].split("=", 1)[1])
            lines = lines[1:]
        reader = csv.reader(lines)
        header = next(reader)
        nets, rows = [], []
        for rec in reader:
            nets.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
        vals = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
        return cls(nets, tuple(header[1:]), vals, far)


def _fmt(column: str, v: float) -> str:
    if column in ("p1", "p_trans"):
        return repr(float(v))
    return str(int(v))


def extract_features(h: Hypergraph, pi_bias: Mapping[str, float] | None = None,
                     exclude: Sequence[str] = ()) -> FeatureTable:
    """All features for every net except constants, clocks and ``exclude``."""
    bias = default_bias(h)
    bias.update(pi_bias or {})
    probs = compute_probabilities(h, bias)
    fs = compute_scoap(h, FULL_SCAN)
    ns = compute_scoap(h, NO_SCAN)
    st = compute_structural(h)
    skip = set(exclude) | set(h.constants) | set(h.netlist.clocks)
    nets = [n for n in h.net_names if n not in skip]
    rows = np.empty((len(nets), len(FEATURE_NAMES)))
    for i, net in enumerate(nets):
        p, f, s, t = probs[net], fs[net], ns[net], st[net]
        rows[i] = (p.p1, p.p_trans, f.cc0, f.cc1, f.co, s.cc0, s.cc1, s.co, s.sc0, s.sc1, s.so,
                   t.fanin_l1, t.fanout_l1, t.fanin_l2, t.fanout_l2,
                   t.dist_ff_d, t.dist_ff_q, t.dist_pi, t.dist_po)
    return FeatureTable(nets, FEATURE_NAMES, rows, unreachable(h),
                        probs.converged and ns.converged)
