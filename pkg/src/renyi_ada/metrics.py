"""Classification metrics and kernel density exports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_precision": self.macro_precision,
                "macro_recall": self.macro_recall, "macro_f1": self.macro_f1,
                "confusion": self.confusion.tolist()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetricsRecord):
            return NotImplemented
        return (self.accuracy == other.accuracy and self.macro_precision == other.macro_precision
                and self.macro_recall == other.macro_recall and self.macro_f1 == other.macro_f1
                and np.array_equal(self.confusion, other.confusion))


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def evaluate(pairs: Iterable[tuple[int, int]], num_classes: int | None = None) -> MetricsRecord:
    """Accuracy and macro P/R/F1 from (true, predicted) pairs; 0/0 terms count as 0."""
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("evaluate needs at least one (true, predicted) pair")
    if arr.min() < 0:
        raise ValueError("labels must be non-negative")
    c = int(arr.max()) + 1 if num_classes is None else int(num_classes)
    if arr.max() >= c:
        raise ValueError(f"label {int(arr.max())} outside 0..{c - 1}")
    conf = np.zeros((c, c), dtype=np.int64)
    np.add.at(conf, (arr[:, 0], arr[:, 1]), 1)
    tp = np.diag(conf).astype(np.float64)
    precision = _safe_div(tp, conf.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, conf.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return MetricsRecord(float(tp.sum() / arr.shape[0]), float(precision.mean()),
                         float(recall.mean()), float(f1.mean()), conf)


def scott_bandwidth(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1) * v.size ** (-0.2))


def kde_export(values, bandwidth: float | None = None, grid: int = 256) -> list[tuple[float, float]]:
    """Gaussian KDE sampled on an even grid over [min - 3h, max + 3h]."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("kde_export needs at least two values")
    if grid < 2:
        raise ValueError("grid needs at least two points")
    h = scott_bandwidth(v) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("zero bandwidth: input values are constant")
    xs = np.linspace(v.min() - 3 * h, v.max() + 3 * h, grid)
    z = (xs[:, None] - v[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (v.size * h * np.sqrt(2 * np.pi))
    return list(zip(xs.tolist(), dens.tolist()))


def kde_csv(rows: list[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "density"])
    for x, d in rows:
        w.writerow([repr(x), repr(d)])
    return buf.getvalue()


def metrics_csv(records: list[tuple[str, MetricsRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "accuracy", "macro_precision", "macro_recall", "macro_f1"])
    for stage, r in records:
        w.writerow([stage, repr(r.accuracy), repr(r.macro_precision),
                    repr(r.macro_recall), repr(r.macro_f1)])
    return buf.getvalue()
