"""Pixel-wise confusion counts and the derived evaluation metrics.

The positive class is the lane. Two accuracy variants are reported: the
standard (tp + tn) / total, and a historical variant with (tp + fn) in the
numerator kept for comparability; the standard one is what acceptance and
model selection use. Precision, recall, and F1 fall back to 0 when their
denominator is 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .model import forward
from .tensor import argmax_channel


@dataclass
class ConfusionCounts:
    n_tp: int = 0
    n_fp: int = 0
    n_fn: int = 0
    n_tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.n_tp + other.n_tp, self.n_fp + other.n_fp,
                               self.n_fn + other.n_fn, self.n_tn + other.n_tn)

    @property
    def total(self):
        return self.n_tp + self.n_fp + self.n_fn + self.n_tn


@dataclass
class MetricsReport:
    precision: float
    recall: float
    accuracy_standard: float
    accuracy_paper: float
    f1: float
    counts: ConfusionCounts


def confusion_counts(pred_mask, true_mask):
    """Tally per-pixel agreement of two binary maps (nonzero = lane)."""
    pred = np.asarray(pred_mask)
    true = np.asarray(true_mask)
    if pred.shape != true.shape:
        raise ContractViolation(
            f"prediction shape {pred.shape} does not match truth {true.shape}")
    p = pred != 0
    t = true != 0
    return ConfusionCounts(
        n_tp=int(np.sum(p & t)),
        n_fp=int(np.sum(p & ~t)),
        n_fn=int(np.sum(~p & t)),
        n_tn=int(np.sum(~p & ~t)),
    )


def metrics_from_counts(c):
    """Precision, recall, both accuracy variants, and F1 from raw counts."""
    total = c.total
    if total <= 0:
        raise ConfigurationError("cannot compute metrics from all-zero counts")
    precision = c.n_tp / (c.n_tp + c.n_fp) if c.n_tp + c.n_fp > 0 else 0.0
    recall = c.n_tp / (c.n_tp + c.n_fn) if c.n_tp + c.n_fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        precision=precision,
        recall=recall,
        accuracy_standard=(c.n_tp + c.n_tn) / total,
        accuracy_paper=(c.n_tp + c.n_fn) / total,
        f1=f1,
        counts=c,
    )


def evaluate_dataset_metrics(net, dataset, batch_size=20):
    """Micro-averaged metrics: pool confusion counts over every pixel, then derive."""
    if not dataset:
        raise ConfigurationError("cannot compute metrics on an empty dataset")
    counts = ConfusionCounts()
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        images = np.concatenate([s.image for s in chunk], axis=0)
        masks = np.concatenate([s.mask for s in chunk], axis=0)
        probs, _ = forward(net, images)
        pred = argmax_channel(probs)
        true = argmax_channel(masks)
        counts = counts + confusion_counts(pred, true)
    return metrics_from_counts(counts)


CSV_HEADER = "epochs,precision,recall,accuracy_standard,accuracy_paper,f1"


def metrics_csv_lines(rows):
    """CSV rows for (label, report) pairs, one line each, 6 decimal places."""
    lines = [CSV_HEADER]
    for label, r in rows:
        lines.append(f"{label},{r.precision:.6f},{r.recall:.6f},"
                     f"{r.accuracy_standard:.6f},{r.accuracy_paper:.6f},{r.f1:.6f}")
    return lines


def write_metrics_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(metrics_csv_lines(rows)) + "\n")
