"""Labeled training matrices, min-max scaling and wrapper feature selection."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import train_svm
from .errors import FeatureMismatch, InsufficientData, Untrainable
from .features import FeatureTable
from .injector import TrojanInstance

NORMAL, TROJAN_LABEL = 0, 1
SCALE_CLAMP = (-0.5, 1.5)


@dataclass
class LabeledDataset:
    columns: tuple[str, ...]
    x: np.ndarray  # unscaled feature rows
    y: np.ndarray  # 1 = Trojan, 0 = Normal
    nets: list[str]
    designs: list[str]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def counts(self) -> dict[str, int]:
        t = int(self.y.sum())
        return {"Normal": len(self.y) - t, "Trojan": t}

    @property
    def trainable(self) -> bool:
        c = self.counts
        return c["Normal"] > 0 and c["Trojan"] > 0

    def require_trainable(self) -> "LabeledDataset":
        if not self.trainable:
            raise Untrainable(f"dataset has label counts {self.counts}; both classes are needed")
        return self

    def select(self, columns: Sequence[str]) -> np.ndarray:
        try:
            idx = [self.columns.index(c) for c in columns]
        except ValueError as exc:
            raise FeatureMismatch(str(exc)) from None
        return self.x[:, idx]


def build_dataset(clean: FeatureTable, instances: Sequence[tuple[FeatureTable, TrojanInstance]],
                  design: str = "suspect") -> LabeledDataset:
    """Every clean net once as Normal plus every inserted net of every instance as Trojan."""
    for table, _ in instances:
        if tuple(table.columns) != tuple(clean.columns):
            raise FeatureMismatch("feature columns differ between designs")
    xs = [clean.values]
    nets = list(clean.nets)
    designs = [design] * len(clean.nets)
    labels = [np.zeros(len(clean.nets), dtype=int)]
    for k, (table, troj) in enumerate(instances):
        tnets = [n for n in table.nets if n in set(troj.trojan_nets)]
        if tnets:
            xs.append(table.subset(tnets).values)
            nets.extend(tnets)
            designs.extend([f"{design}#{k}"] * len(tnets))
            labels.append(np.ones(len(tnets), dtype=int))
    x = np.vstack(xs) if xs else np.empty((0, len(clean.columns)))
    return LabeledDataset(tuple(clean.columns), x, np.concatenate(labels), nets, designs,
                          {"instances": len(instances)})


# -- scaling -----------------------------------------------------------------

@dataclass(frozen=True)
class MinMaxScaler:
    columns: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, columns: Sequence[str]) -> "MinMaxScaler":
        x = np.asarray(x, dtype=float)
        return cls(tuple(columns), x.min(0), x.max(0))

    def transform(self, x: np.ndarray, clamp: tuple[float, float] | None = SCALE_CLAMP) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (x - self.lo) / safe, 0.0)
        if clamp is not None:
            out = np.clip(out, *clamp)
        return out

    def subset(self, columns: Sequence[str]) -> "MinMaxScaler":
        idx = [self.columns.index(c) for c in columns]
        return MinMaxScaler(tuple(columns), self.lo[idx], self.hi[idx])

    def to_json(self) -> dict:
        return {"columns": list(self.columns), "min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, d) -> "MinMaxScaler":
        return cls(tuple(d["columns"]), np.array(d["min"], float), np.array(d["max"], float))


def fit_scaler(d: LabeledDataset) -> MinMaxScaler:
    return MinMaxScaler.fit(d.x, d.columns)


def apply_scaler(scaler: MinMaxScaler, rows: np.ndarray) -> np.ndarray:
    return scaler.transform(rows)


# -- cross-validated forward selection ------------------------------------------

def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row, each class spread round-robin after a shuffle."""
    fold = np.empty(len(y), dtype=int)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        fold[idx] = np.arange(len(idx)) % k
    return fold


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def cv_score(x: np.ndarray, y: np.ndarray, folds: np.ndarray, *, C: float = 0.8,
             gamma: float | None = None) -> float:
    """Mean Trojan-class F1 over folds; each fold is scaled on its own training part."""
    scores = []
    for f in range(int(folds.max()) + 1):
        tr, te = folds != f, folds == f
        sc = MinMaxScaler.fit(x[tr], [str(i) for i in range(x.shape[1])])
        m = train_svm(sc.transform(x[tr]), y[tr], [str(i) for i in range(x.shape[1])],
                      C=C, gamma=gamma)
        pred = (m.decision_function(sc.transform(x[te])) > 0).astype(int)
        scores.append(f1_score(y[te], pred))
    return float(np.mean(scores))


def forward_feature_selection(d: LabeledDataset, seed_features: Sequence[str] = ("p1", "p_trans"),
                              folds: int = 5, *, eps: float = 1e-4, seed: int = 0,
                              C: float = 0.8, max_rows: int | None = None,
                              candidates: Sequence[str] | None = None) -> list[str]:
    """Greedy wrapper selection starting from ``seed_features``.

    A candidate joins when it raises cross-validated Trojan F1 by more than
    ``eps``; ties go to the column that comes first. ``max_rows`` draws a
    stratified subsample to bound the cost of the many SVM fits.
    """
    rng = np.random.default_rng(seed)
    counts = d.counts
    if min(counts.values()) < folds * 10:
        raise InsufficientData(f"need {folds * 10} rows per class, have {counts}")
    rows = np.arange(len(d))
    if max_rows is not None and len(d) > max_rows:
        rows = _stratified_subsample(d.y, max_rows, rng)
    y = d.y[rows]
    fold = stratified_folds(y, folds, rng)
    selected = list(seed_features)
    pool = [c for c in (candidates or d.columns) if c not in selected]
    best = cv_score(d.select(selected)[rows], y, fold, C=C)
    history = [(tuple(selected), best)]
    while pool:
        scores = [(cv_score(d.select(selected + [c])[rows], y, fold, C=C), c) for c in pool]
        top_score, top = scores[0]
        for s, c in scores[1:]:
            if s > top_score:
                top_score, top = s, c
        if top_score - best <= eps:
            break
        selected.append(top)
        pool.remove(top)
        best = top_score
        history.append((tuple(selected), best))
    d.metadata["selection_history"] = [[list(s), v] for s, v in history]
    return selected


def _stratified_subsample(y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    keep = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        take = max(1, round(n * len(idx) / len(y)))
        keep.append(np.sort(rng.choice(idx, size=min(take, len(idx)), replace=False)))
    return np.sort(np.concatenate(keep))


def aggregate_top_features(selections: Sequence[Sequence[str]], k: int = 5) -> list[str]:
    """Most frequently selected features; ties broken by mean position, then name."""
    if not selections:
        raise ValueError("need at least one selection")
    freq = Counter(f for sel in selections for f in sel)
    pos: dict[str, list[int]] = {}
    for sel in selections:
        for i, f in enumerate(sel):
            pos.setdefault(f, []).append(i)
    ranked = sorted(freq, key=lambda f: (-freq[f], float(np.mean(pos[f])), f))
    return ranked[:k]


# -- archive -------------------------------------------------------------------

def dataset_csv(d: LabeledDataset, scaler: MinMaxScaler) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("design", "net", "label") + d.columns)
    for design, net, label, row in zip(d.designs, d.nets, d.y, scaler.transform(d.x, None)):
        w.writerow([design, net, "Trojan" if label else "Normal"] + [repr(float(v)) for v in row])
    return buf.getvalue()


def read_dataset_csv(text: str, scaler: MinMaxScaler) -> LabeledDataset:
    """Inverse of :func:`dataset_csv`; zero-range columns come back at their constant."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    cols = tuple(header[3:])
    designs, nets, labels, rows = [], [], [], []
    for rec in reader:
        designs.append(rec[0])
        nets.append(rec[1])
        labels.append(1 if rec[2] == "Trojan" else 0)
        rows.append([float(v) for v in rec[3:]])
    s = scaler.subset(cols)
    scaled = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    x = s.lo + scaled * (s.hi - s.lo)
    return LabeledDataset(cols, x, np.array(labels, dtype=int), nets, designs)


def manifest(d: LabeledDataset, scaler: MinMaxScaler, selected: Sequence[str] | None,
             seeds: dict) -> str:
    return json.dumps({
        "scaler": scaler.to_json(),
        "selected_features": list(selected) if selected is not None else None,
        "label_counts": d.counts,
        "seeds": seeds,
        "metadata": d.metadata,
    }, indent=1, sort_keys=True)
