"""Log loss, multiclass Brier loss, accuracy, confusion matrices and the dummy baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

CLAMP = 1e-15


@dataclass(frozen=True)
class MetricsReport:
    log_loss: float | None
    brier: float | None
    accuracy: float
    confusion: np.ndarray       # rows = actual, columns = predicted
    class_names: tuple[str, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fmt = lambda v: "n/a" if v is None else f"{v:.6f}"
        w.writerow(("log_loss", "brier", "accuracy"))
        w.writerow((fmt(self.log_loss), fmt(self.brier), fmt(self.accuracy)))
        w.writerow(())
        names = self.class_names or tuple(str(i) for i in range(self.confusion.shape[0]))
        w.writerow(("actual\\predicted",) + tuple(names))
        for name, row in zip(names, self.confusion):
            w.writerow((name,) + tuple(int(v) for v in row))
        return buf.getvalue()


def confusion_matrix(actual, predicted, K: int) -> np.ndarray:
    m = np.zeros((K, K), dtype=np.int64)
    np.add.at(m, (np.asarray(actual), np.asarray(predicted)), 1)
    return m


def _check_labels(labels, K):
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("labels must be a non-empty vector")
    if y.min() < 0 or y.max() >= K:
        raise DomainError("label outside [0, K)")
    return y


def evaluate(probs, labels, class_names: Sequence[str] = ()) -> MetricsReport:
    P = np.asarray(probs, dtype=np.float64)
    if P.ndim != 2:
        raise DomainError("probabilities must be an (n, K) matrix")
    n, K = P.shape
    y = _check_labels(labels, K)
    if y.shape[0] != n:
        raise DomainError(f"{n} probability rows but {y.shape[0]} labels")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError("probability rows must be non-negative and sum to 1")
    rows = np.arange(n)
    log_loss = float(-np.log(np.maximum(P[rows, y], CLAMP)).mean())
    onehot = np.zeros_like(P)
    onehot[rows, y] = 1.0
    brier = float(((P - onehot) ** 2).sum(axis=1).mean())
    pred = P.argmax(axis=1)
    cm = confusion_matrix(y, pred, K)
    return MetricsReport(log_loss, brier, float(np.trace(cm) / n), cm, tuple(class_names))


def evaluate_hard(predicted, labels, K: int, class_names: Sequence[str] = ()) -> MetricsReport:
    """Accuracy and confusion only, for predictors without probabilities."""
    y = _check_labels(labels, K)
    p = _check_labels(predicted, K)
    cm = confusion_matrix(y, p, K)
    return MetricsReport(None, None, float(np.trace(cm) / len(y)), cm, tuple(class_names))


def confusion_accuracy(matrix) -> float:
    M = np.asarray(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or np.any(M < 0):
        raise DomainError("confusion matrix must be square and non-negative")
    total = M.sum()
    if total == 0:
        raise DomainError("confusion matrix is all zero")
    return float(np.trace(M) / total)


@dataclass(frozen=True)
class DummyClassifier:
    """Predicts the training class frequencies for every input."""
    probs: np.ndarray

    @property
    def hard_prediction(self) -> int:
        return int(np.argmax(self.probs))

    def predict_proba(self, n: int) -> np.ndarray:
        return np.tile(self.probs, (n, 1))


def dummy_fit(labels, K: int) -> DummyClassifier:
    y = _check_labels(labels, K)
    return DummyClassifier(np.bincount(y, minlength=K) / y.size)


def read_confusion(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a confusion block as written by ``MetricsReport.to_csv`` (header row + named rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows[0]
    if header and header[0].startswith("log_loss"):
        rows = rows[2:]
        header = rows[0]
    names = tuple(header[1:])
    M = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    if M.shape != (len(names), len(names)):
        raise DomainError(f"{path}: confusion matrix is not {len(names)}x{len(names)}")
    return names, M
