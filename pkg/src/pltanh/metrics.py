"""Classification measures: accuracy, macro precision/recall/F1 and macro one-vs-rest AUC."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import List, Sequence

import numpy as np
from scipy.stats import rankdata


def predict(probabilities: np.ndarray) -> np.ndarray:
    """Argmax per row; ``np.argmax`` already returns the lowest index on ties."""
    return np.asarray(probabilities).argmax(axis=1)


def confusion(true_labels, predicted_labels, classes: int) -> np.ndarray:
    """K x K counts; entry (i, j) is the number of class-i samples predicted as j."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= classes):
            raise ValueError(f"{name} label outside [0, {classes})")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def macro_prf(cm: np.ndarray):
    """Unweighted class means of precision, recall and F1 (0/0 counts as 0)."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks, so ties count one half."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc_ovr(probabilities: np.ndarray, true_labels) -> float:
    """Mean one-vs-rest AUC over every class that has both positives and negatives."""
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(true_labels)
    if probs.shape[0] < 2:
        raise ValueError("AUC needs at least two samples")
    aucs = []
    for k in range(probs.shape[1]):
        pos = labels == k
        if pos.any() and not pos.all():
            aucs.append(binary_auc(probs[:, k], pos))
    if not aucs:
        raise ValueError("no class has both positive and negative samples")
    return float(np.mean(aucs))


def accuracy(true_labels, predicted_labels) -> float:
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.size == 0:
        raise ValueError("accuracy of an empty set")
    if t.shape != p.shape:
        raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
    return float((t == p).mean())


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_auc: float

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(probabilities: np.ndarray, true_labels, classes: int) -> Metrics:
    pred = predict(probabilities)
    p, r, f1 = macro_prf(confusion(true_labels, pred, classes))
    return Metrics(accuracy(true_labels, pred), p, r, f1, macro_auc_ovr(probabilities, true_labels))


@dataclass(frozen=True)
class MetricsReport:
    """Per-fold metrics and their arithmetic mean."""

    folds: tuple

    @classmethod
    def from_folds(cls, folds: Sequence[Metrics]) -> "MetricsReport":
        if not folds:
            raise ValueError("report needs at least one fold")
        return cls(tuple(folds))

    @property
    def mean(self) -> Metrics:
        names = [f.name for f in fields(Metrics)]
        return Metrics(**{n: float(np.mean([getattr(m, n) for m in self.folds])) for n in names})

    def as_dict(self) -> dict:
        return {"mean": self.mean.as_dict(), "folds": [m.as_dict() for m in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(tuple(Metrics(**m) for m in d["folds"]))

    def fold_values(self, name: str) -> List[float]:
        return [getattr(m, name) for m in self.folds]
