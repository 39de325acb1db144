"""Reward model over theme-set features, trained on binary human ratings.

The model is linear, ``w . x + b``, fitted by full-batch gradient descent on
mean squared error.  It drives best-of-n selection among candidate theme sets
rather than updating any generator weights.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DivergedLoss, NoCandidates, NoRecords
from .metrics import HashedEmbedding
from .model import THEME_WORD_LIMIT, ScoreVector, ThemeSet

FEATURE_NAMES = (
    "credibility",
    "dependability",
    "transferability",
    "mean_pairwise_cosine_distance",
    "mean_word_count_ratio",
    "theme_count_ratio",
)
FEATURE_DIM = len(FEATURE_NAMES)
THEME_COUNT_SCALE = 20
CRITERIA = ("Coverage", "Actionability", "Distinctiveness", "Relevance")


def features(ts: ThemeSet, s: ScoreVector) -> np.ndarray:
    """Fixed-order feature vector: the three scores plus three shape features."""
    themes = list(ts)
    if len(themes) >= 2:
        vecs = HashedEmbedding().embed([t.text for t in themes])
        dists = [1.0 - float(vecs[i] @ vecs[j]) for i, j in itertools.combinations(range(len(themes)), 2)]
        spread = sum(dists) / len(dists)
    else:
        spread = 0.0
    words = sum(t.word_count for t in themes) / len(themes) / THEME_WORD_LIMIT if themes else 0.0
    c, d, t = s.normalized()
    return np.array([c, d, t, spread, words, len(themes) / THEME_COUNT_SCALE], dtype=float)


# -- ratings ---------------------------------------------------------------------


@dataclass
class RewardRecord:
    theme_set_id: str
    rating: int
    criteria_notes: dict[str, str] = field(default_factory=dict)
    rater: str = ""
    timestamp: str = ""
    features: list[float] | None = None

    def __post_init__(self):
        if self.rating not in (0, 1) or isinstance(self.rating, bool):
            raise ValueError(f"rating must be 0 or 1, got {self.rating!r}")
        unknown = set(self.criteria_notes) - set(CRITERIA)
        if unknown:
            raise ValueError(f"unknown rating criteria {sorted(unknown)}; expected {CRITERIA}")
        if self.features is not None:
            if len(self.features) != FEATURE_DIM or not all(math.isfinite(v) for v in self.features):
                raise ValueError(f"features must be {FEATURE_DIM} finite numbers")

    def to_dict(self) -> dict:
        return {
            "theme_set_id": self.theme_set_id,
            "rating": self.rating,
            "criteria_notes": dict(self.criteria_notes),
            "rater": self.rater,
            "timestamp": self.timestamp,
            "features": self.features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RewardRecord:
        feats = d.get("features")
        return cls(
            str(d["theme_set_id"]),
            d["rating"],
            dict(d.get("criteria_notes") or {}),
            str(d.get("rater") or ""),
            str(d.get("timestamp") or ""),
            [float(v) for v in feats] if feats is not None else None,
        )


def load_records(path: str | Path) -> list[RewardRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(RewardRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return records


def append_record(path: str | Path, record: RewardRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


# -- model -----------------------------------------------------------------------


@dataclass
class RewardModel:
    weights: np.ndarray
    bias: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (FEATURE_DIM,):
            raise ValueError(f"reward model needs {FEATURE_DIM} weights, got shape {self.weights.shape}")

    @classmethod
    def zeros(cls) -> RewardModel:
        return cls(np.zeros(FEATURE_DIM))

    def predict(self, x) -> np.ndarray | float:
        return np.asarray(x, dtype=float) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "feature_names": list(FEATURE_NAMES),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RewardModel:
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), dict(d.get("metadata") or {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> RewardModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def mse_loss(w: np.ndarray, b: float, X: np.ndarray, r: np.ndarray) -> float:
    residual = X @ w + b - r
    return float(np.mean(residual**2))


def mse_gradients(w: np.ndarray, b: float, X: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, float]:
    """Analytic gradients of ``mse_loss`` with respect to ``w`` and ``b``."""
    residual = X @ w + b - r
    n = len(r)
    return 2.0 / n * (X.T @ residual), float(2.0 / n * residual.sum())


def train_reward_model(
    records: Sequence[tuple[Sequence[float], int]],
    lr: float = 0.05,
    epochs: int = 1000,
    init: RewardModel | None = None,
) -> RewardModel:
    """Full-batch gradient descent from zero weights (or ``init``).

    The returned model's metadata carries the per-epoch loss curve; entry 0 is
    the loss before the first update.
    """
    if not records:
        raise NoRecords("reward model training needs at least one rated record")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    X = np.asarray([x for x, _ in records], dtype=float)
    r = np.asarray([y for _, y in records], dtype=float)
    if X.ndim != 2 or X.shape[1] != FEATURE_DIM:
        raise ValueError(f"features must have dimension {FEATURE_DIM}")
    w = np.array(init.weights if init else np.zeros(FEATURE_DIM), dtype=float)
    b = float(init.bias) if init else 0.0
    losses = [mse_loss(w, b, X, r)]
    for epoch in range(epochs):
        # overflow is reported as DivergedLoss below, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            gw, gb = mse_gradients(w, b, X, r)
            w = w - lr * gw
            b = b - lr * gb
            loss = mse_loss(w, b, X, r)
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite at epoch {epoch + 1} (lr={lr})")
        losses.append(loss)
    meta = {"epochs": epochs, "learning_rate": lr, "records": len(r), "final_loss": losses[-1], "loss_curve": losses}
    return RewardModel(w, b, meta)


def score_theme_set(ts: ThemeSet, s: ScoreVector, model: RewardModel) -> float:
    return float(model.predict(features(ts, s)))


def argmax_lowest_id(scored: Iterable[tuple[str, float]]) -> int:
    """Index of the highest score; ties go to the lexicographically lowest id."""
    items = list(scored)
    if not items:
        raise NoCandidates("no candidates to select from")
    return min(range(len(items)), key=lambda i: (-items[i][1], items[i][0]))


def best_of_n_select(candidates: Sequence[tuple[ThemeSet, ScoreVector]], model: RewardModel) -> ThemeSet:
    """Highest-reward candidate; ties broken by the lower theme-set id."""
    if not candidates:
        raise NoCandidates("best-of-n selection needs at least one candidate")
    scored = [(ts.id, score_theme_set(ts, s, model)) for ts, s in candidates]
    return candidates[argmax_lowest_id(scored)][0]
