"""Evaluation metrics for classifier outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


def difference_in_logits(logits, source: int) -> float:
    """True-class logit minus the largest logit of any other class.

    Negative values mean the example is misclassified.
    """
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if logits.size < 2:
        raise InvalidInputError("difference in logits needs at least two classes")
    if not 0 <= source < logits.size:
        raise InvalidInputError(f"source class {source} out of range for {logits.size} logits")
    others = np.delete(logits, source)
    return float(logits[source] - others.max())


def difference_in_logits_batch(logits: np.ndarray, sources: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise InvalidInputError("expected logits of shape [batch, classes>=2]")
    rows = np.arange(logits.shape[0])
    true = logits[rows, sources]
    masked = logits.copy()
    masked[rows, sources] = -np.inf
    return true - masked.max(axis=1)


def ej_n0_db(es_n0_db: float, es_ej_db: float) -> float:
    """Jamming-to-noise ratio implied by Es/N0 and Es/Ej (all in dB)."""
    return float(es_n0_db) - float(es_ej_db)


def top1_accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if predictions.size != labels.size:
        raise InvalidInputError("predictions and labels differ in length")
    if predictions.size == 0:
        raise InvalidInputError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    """Counts with rows indexed by true class and columns by prediction."""
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return out


@dataclass(frozen=True)
class PercentileSummary:
    mean: float
    p25: float
    p50: float
    p75: float

    def as_dict(self) -> dict:
        return {"mean": self.mean, "p25": self.p25, "p50": self.p50, "p75": self.p75}


def percentile_summary(values) -> PercentileSummary:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise InvalidInputError("cannot summarise an empty sample")
    p25, p50, p75 = np.percentile(values, [25, 50, 75], method="linear")
    return PercentileSummary(float(values.mean()), float(p25), float(p50), float(p75))
