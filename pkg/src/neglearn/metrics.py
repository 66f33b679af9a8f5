"""Filtering-quality metrics with "noisy" as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class FilterReport:
    estimated_noise_pct: float
    recall_pct: float | None  # None when there are no truly noisy samples
    precision_pct: float | None  # None when nothing was predicted noisy
    actual_noise_pct: float
    tp: int
    fp: int
    fn: int
    tn: int
    confidence: np.ndarray
    predicted_noisy: np.ndarray
    true_noisy: np.ndarray

    def summary(self) -> dict:
        return {
            "estimated_noise": self.estimated_noise_pct,
            "actual_noise": self.actual_noise_pct,
            "recall": self.recall_pct,
            "precision": self.precision_pct,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def confusion_counts(predicted_noisy, true_noisy) -> tuple[int, int, int, int]:
    pred = np.asarray(predicted_noisy, dtype=bool)
    true = np.asarray(true_noisy, dtype=bool)
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    return tp, fp, fn, tn


def filter_metrics(partition, true_noisy) -> FilterReport:
    """Score a clean/noisy partition against ground-truth noise flags.

    ``partition`` is anything with ``noisy_mask`` and ``confidence`` arrays
    (a ``FilterPartition``).
    """
    pred = np.asarray(partition.noisy_mask, dtype=bool)
    true = np.asarray(true_noisy, dtype=bool)
    if pred.shape != true.shape:
        raise MetricsError(f"partition covers {pred.size} samples, truth has {true.size}")
    if pred.size == 0:
        raise MetricsError("empty partition")
    tp, fp, fn, tn = confusion_counts(pred, true)
    n = pred.size
    recall = 100.0 * tp / (tp + fn) if tp + fn else None
    precision = 100.0 * tp / (tp + fp) if tp + fp else None
    return FilterReport(
        estimated_noise_pct=100.0 * (tp + fp) / n,
        recall_pct=recall,
        precision_pct=precision,
        actual_noise_pct=100.0 * (tp + fn) / n,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        confidence=np.asarray(partition.confidence, dtype=np.float64),
        predicted_noisy=pred,
        true_noisy=true,
    )


@dataclass
class PRCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    auc: float

    def rows(self):
        return zip(self.recall.tolist(), self.precision.tolist())


def pr_curve(confidences, true_noisy) -> PRCurve:
    """Precision/recall of "noisy = confidence <= t" swept over the unique confidences.

    Recall and precision are fractions in [0, 1]. The AUC is the trapezoid
    area over recall, anchored at recall 0 with the first point's precision.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    true = np.asarray(true_noisy, dtype=bool)
    if conf.shape != true.shape or conf.ndim != 1:
        raise MetricsError("confidences and flags must be matching 1-d arrays")
    n_pos = int(true.sum())
    if n_pos == 0 or n_pos == true.size:
        raise MetricsError("PR curve needs both noisy and clean samples")
    order = np.argsort(conf, kind="stable")
    c_sorted = conf[order]
    tp_cum = np.cumsum(true[order])
    # last position of each run of equal confidences
    last = np.flatnonzero(np.r_[c_sorted[1:] != c_sorted[:-1], True])
    tp = tp_cum[last].astype(np.float64)
    predicted = (last + 1).astype(np.float64)
    recall = tp / n_pos
    precision = tp / predicted
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    auc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))
    return PRCurve(c_sorted[last], recall, precision, auc)


def confidence_histogram(confidences, true_noisy, bins: int = 20):
    """Counts of clean and noisy samples over ``bins`` equal-width bins on [0, 1].

    Returns ``(edges, clean_counts, noisy_counts)``; a confidence of exactly 1
    falls into the last bin.
    """
    if bins < 2:
        raise MetricsError("need at least 2 bins")
    conf = np.clip(np.asarray(confidences, dtype=np.float64), 0.0, 1.0)
    true = np.asarray(true_noisy, dtype=bool)
    edges = np.linspace(0.0, 1.0, bins + 1)
    clean, _ = np.histogram(conf[~true], bins=edges)
    noisy, _ = np.histogram(conf[true], bins=edges)
    return edges, clean, noisy


def accuracy(net, dataset, labels=None) -> float:
    """Percentage of argmax predictions matching ``labels`` (default: dataset labels).

    Ties go to the lowest class index.
    """
    y = dataset.labels if labels is None else np.asarray(labels)
    if len(y) == 0:
        raise MetricsError("accuracy of an empty dataset is undefined")
    pred = np.argmax(net.predict_proba(dataset.features), axis=1)
    return 100.0 * float(np.mean(pred == y))
