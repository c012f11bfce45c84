"""Confusion-matrix metrics and rank-based AUC for binary fraud scores."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricsReport:
    recall: float
    precision: float
    f1: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        doc = json.loads(text)
        if set(doc) != set(cls.__dataclass_fields__):
            raise ValueError(f"metrics report keys {sorted(doc)} do not match the schema")
        return cls(**doc)


def _select(values, labels, mask):
    values = np.asarray(values, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if mask is None:
        mask = np.ones(len(values), bool)
    mask = np.asarray(mask, bool)
    return values[mask], labels[mask]


def confusion(probs, labels, mask=None, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) over the masked nodes; predicted fraud iff prob >= threshold."""
    p, y = _select(probs, labels, mask)
    if p.size == 0:
        raise ValueError("confusion needs a nonempty mask")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels under the mask must be 0 or 1")
    pred = p >= threshold
    pos = y == 1
    return (int(np.sum(pred & pos)), int(np.sum(pred & ~pos)),
            int(np.sum(~pred & ~pos)), int(np.sum(~pred & pos)))


def _ratio(num, den):
    return num / den if den else 0.0


def recall_precision_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    recall = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    f1 = _ratio(2 * recall * precision, recall + precision)
    return recall, precision, f1


def auc(scores, labels, mask=None) -> float:
    """Mann-Whitney AUC from ascending ranks; tied scores share their average rank."""
    s, y = _select(scores, labels, mask)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(probs, labels, mask=None, threshold: float = 0.5) -> MetricsReport:
    tp, fp, tn, fn = confusion(probs, labels, mask, threshold)
    recall, precision, f1 = recall_precision_f1(tp, fp, fn)
    return MetricsReport(recall, precision, f1, auc(probs, labels, mask), tp, fp, tn, fn, threshold)
