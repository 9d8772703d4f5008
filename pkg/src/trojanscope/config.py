"""Run configuration and deterministic per-stage seed derivation."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .features import FEATURE_NAMES
from .injector import COMB, SEQ


@dataclass
class RunConfig:
    netlist: str | None = None
    library: str | None = None
    ground_truth: str | None = None
    output: str = "run"
    clocks: list[str] = field(default_factory=list)
    resets: list[str] = field(default_factory=list)
    classes: list[str] = field(default_factory=lambda: [COMB, SEQ])
    trigger_counts: list[int] = field(default_factory=lambda: [5, 6, 8])
    instances: int = 50
    threshold_min: float = 1e-4
    threshold_max: float = 1e-1
    theta_depth: int = 2
    theta_l: float = 0.4
    theta_u: float = 0.6
    theta_cc: float = 0.0
    theta_sc: float = 0.0
    svm_c: float = 0.8
    svm_gamma: float | None = None
    svm_tol: float = 1e-3
    cv_folds: int = 5
    selection_rows: int | None = 300
    seed_features: list[str] = field(default_factory=lambda: ["p1", "p_trans"])
    top_k: int = 5
    features: list[str] | None = None  # fixed feature list skips selection
    seed: int = 0

    def validate(self) -> "RunConfig":
        if not 0 < self.threshold_min <= self.threshold_max < 0.5:
            raise ConfigError("threshold sweep bounds must satisfy 0 < min <= max < 0.5")
        if self.instances < 0:
            raise ConfigError("instances must be non-negative")
        if not self.classes or any(c not in (COMB, SEQ) for c in self.classes):
            raise ConfigError(f"classes must be drawn from {COMB!r}, {SEQ!r}")
        if not self.trigger_counts or any(int(k) < 1 for k in self.trigger_counts):
            raise ConfigError("trigger counts must be positive")
        if self.theta_depth < 1:
            raise ConfigError("theta_depth must be at least 1")
        if not 0.0 <= self.theta_l < self.theta_u <= 1.0:
            raise ConfigError("need 0 <= theta_l < theta_u <= 1")
        if self.svm_c <= 0 or (self.svm_gamma is not None and self.svm_gamma <= 0):
            raise ConfigError("SVM C and gamma must be positive")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be at least 2")
        names = set(FEATURE_NAMES)
        for f in list(self.seed_features) + list(self.features or []):
            if f not in names:
                raise ConfigError(f"unknown feature {f!r}")
        return self

    def thresholds(self) -> tuple[float, ...]:
        """Decade sweep from ``threshold_min`` up to and including ``threshold_max``."""
        out, t = [], self.threshold_min
        while t < self.threshold_max * (1 - 1e-9):
            out.append(float(f"{t:.6g}"))
            t *= 10
        out.append(self.threshold_max)
        return tuple(out)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**dict(data)).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        data: dict = {}
        if path:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(data)


def derive_seed(master: int, *labels: str | int) -> int:
    """Independent 63-bit seed for a named stage, e.g. ``derive_seed(s, "inject", "comb", 5)``.

    Labels become the spawn key of a :class:`numpy.random.SeedSequence`
    rooted at the master seed, so adding a stage never shifts another's seed.
    """
    key = tuple(zlib.crc32(str(x).encode()) for x in labels)
    ss = np.random.SeedSequence(master, spawn_key=key)
    hi, lo = (int(w) for w in ss.generate_state(2, dtype=np.uint32))
    return (hi << 31) | (lo >> 1)
