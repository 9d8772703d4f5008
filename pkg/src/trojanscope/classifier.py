"""RBF soft-margin SVM trained by SMO, plus per-net voting across models."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FeatureMismatch, NetUniverseMismatch, NonConvergence, Untrainable

TROJAN, FREE = "Trojan", "Free"
_TAU = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(x: np.ndarray) -> float:
    """1 / (n_features * variance of the training matrix); 1.0 for a constant matrix."""
    var = float(x.var())
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


def balanced_weights(y: np.ndarray) -> dict[int, float]:
    n = len(y)
    return {c: n / (2.0 * int((y == c).sum())) for c in (-1, 1)}


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    gap: float
    iterations: int
    converged: bool


def smo(K: np.ndarray, y: np.ndarray, upper: np.ndarray, *, eps: float = 1e-3,
        max_iter: int = 1_000_000) -> SmoResult:
    """Dual solve of min 1/2 a'Qa - e'a s.t. 0 <= a <= upper, y'a = 0.

    Working pairs come from second-order selection; the stopping gap is the
    maximal KKT violation m(a) - M(a).
    """
    n = len(y)
    yf = y.astype(float)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    it, gap = 0, np.inf
    while it < max_iter:
        at_up = alpha >= upper
        at_low = alpha <= 0
        i_up = np.where(yf > 0, ~at_up, ~at_low)
        i_low = np.where(yf > 0, ~at_low, ~at_up)
        score = -yf * grad
        if not i_up.any() or not i_low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(i_up, score, -np.inf)))
        gmax = score[i]
        gmin = float(np.min(np.where(i_low, score, np.inf)))
        gap = gmax - gmin
        if gap < eps:
            break
        b = gmax - score
        cand = i_low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1

        yi, yj = yf[i], yf[j]
        ci, cj = upper[i], upper[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], _TAU)
        ai, aj = ai_old, aj_old
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > ci - cj:
                if ai > ci:
                    ai, aj = ci, ci - diff
            elif aj > cj:
                aj, ai = cj, cj + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > ci:
                if ai > ci:
                    ai, aj = ci, total - ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > cj:
                if aj > cj:
                    aj, ai = cj, total - cj
            elif ai < 0:
                ai, aj = 0.0, total
        ai, aj = _snap(ai, ci), _snap(aj, cj)
        alpha[i], alpha[j] = ai, aj
        di, dj = ai - ai_old, aj - aj_old
        grad += yf * (K[:, i] * (yi * di) + K[:, j] * (yj * dj))
    converged = bool(gap < eps)
    return SmoResult(alpha, _rho(alpha, grad, yf, upper), float(gap), it, converged)


def _snap(a: float, c: float) -> float:
    # keep bound membership exact despite round-off in the pair update
    if a <= c * 1e-12:
        return 0.0
    if a >= c * (1.0 - 1e-12):
        return c
    return a


def _rho(alpha, grad, yf, upper) -> float:
    """Offset from free vectors, else midpoint of the feasible interval."""
    yg = yf * grad
    at_up = alpha >= upper
    at_low = alpha <= 0
    free = ~at_up & ~at_low
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_up & (yf < 0)) | (at_low & (yf > 0))
    lb_mask = (at_up & (yf > 0)) | (at_low & (yf < 0))
    ub = float(yg[ub_mask].min()) if ub_mask.any() else np.inf
    lb = float(yg[lb_mask].max()) if lb_mask.any() else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0
    return (ub + lb) / 2.0


@dataclass
class TrainedModel:
    features: tuple[str, ...]
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    class_weights: dict[int, float]
    kkt_gap: float
    converged: bool
    metadata: dict = field(default_factory=dict)
    scaler: dict | None = None

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.features):
            raise FeatureMismatch(f"expected {len(self.features)} features, got shape {x.shape}")
        if len(self.dual_coef) == 0:
            return np.full(len(x), self.bias)
        return rbf_kernel(x, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def to_json(self) -> dict:
        return {
            "metadata": self.metadata,
            "features": list(self.features),
            "scaler": self.scaler,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
            "C": self.C,
            "class_weights": {"Normal": self.class_weights[-1], "Trojan": self.class_weights[1]},
            "kkt_gap": self.kkt_gap,
            "converged": self.converged,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "TrainedModel":
        feats = tuple(d["features"])
        sv = np.array(d["support_vectors"], dtype=float).reshape(-1, len(feats))
        w = d["class_weights"]
        return cls(feats, sv, np.array(d["dual_coef"], dtype=float), float(d["bias"]),
                   float(d["gamma"]), float(d["C"]), {-1: w["Normal"], 1: w["Trojan"]},
                   float(d["kkt_gap"]), bool(d["converged"]), dict(d.get("metadata", {})),
                   d.get("scaler"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def train_svm(x: np.ndarray, y: Sequence[int], features: Sequence[str], *, C: float = 0.8,
              gamma: float | None = None, balanced: bool = True, eps: float = 1e-3,
              max_iter: int = 1_000_000, metadata: Mapping | None = None) -> TrainedModel:
    """Fit an RBF SVM; ``y`` uses 1 for Trojan and 0 (or -1) for Normal."""
    x = np.asarray(x, dtype=float)
    yy = np.where(np.asarray(y) > 0, 1, -1)
    if len(set(yy.tolist())) < 2:
        raise Untrainable("training data must contain both classes")
    if x.shape[1] != len(features):
        raise FeatureMismatch("feature list does not match matrix width")
    g = default_gamma(x) if gamma is None else float(gamma)
    weights = balanced_weights(yy) if balanced else {-1: 1.0, 1: 1.0}
    upper = C * np.where(yy > 0, weights[1], weights[-1])
    res = smo(rbf_kernel(x, x, g), yy, upper, eps=eps, max_iter=max_iter)
    if not res.converged:
        warnings.warn(f"SMO stopped at iteration cap with KKT gap {res.gap:.3g}", RuntimeWarning)
    sv = res.alpha > 0
    return TrainedModel(tuple(features), x[sv], (res.alpha * yy)[sv], -res.rho, g, C, weights,
                        res.gap, res.converged, dict(metadata or {}))


def require_converged(m: TrainedModel) -> TrainedModel:
    if not m.converged:
        raise NonConvergence(f"SMO did not reach the KKT tolerance (gap {m.kkt_gap:.3g})")
    return m


# -- predictions and voting ------------------------------------------------------

@dataclass
class PredictionSet:
    nets: list[str]
    decision: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [TROJAN if v > 0 else FREE for v in self.decision]

    def trojan_nets(self) -> set[str]:
        return {n for n, v in zip(self.nets, self.decision) if v > 0}


def predict(m: TrainedModel, nets: Sequence[str], x: np.ndarray) -> PredictionSet:
    return PredictionSet(list(nets), m.decision_function(x), dict(m.metadata))


@dataclass
class VotedPrediction(PredictionSet):
    votes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    total: int = 0

    @property
    def labels(self) -> list[str]:
        return [TROJAN if 2 * v > self.total else FREE for v in self.votes]

    def trojan_nets(self) -> set[str]:
        return {n for n, v in zip(self.nets, self.votes) if 2 * v > self.total}


def majority_vote(preds: Sequence[PredictionSet]) -> VotedPrediction:
    """Strict majority of Trojan votes per net; ties go to Free."""
    if not preds:
        raise ValueError("need at least one prediction set")
    nets = preds[0].nets
    for p in preds[1:]:
        if p.nets != nets:
            raise NetUniverseMismatch("prediction sets cover different nets")
    votes = np.sum([p.decision > 0 for p in preds], axis=0).astype(int)
    mean = np.mean([p.decision for p in preds], axis=0)
    return VotedPrediction(list(nets), mean, {"models": [p.metadata for p in preds]},
                           votes=votes, total=len(preds))
