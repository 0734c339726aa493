"""Evaluation: confusion counts, per-pixel and mean-class accuracy.

Pixels whose ground truth is void are excluded entirely; a void prediction
on an annotated pixel counts as an error against its true class. Classes
that never occur in the ground truth are left out of the class mean.
"""

from __future__ import annotations

import json

import numpy as np

from .core import VOID_INDEX, ClassTable, LabelMap


class ConfusionMatrix:
    """counts[i, j] = pixels of true class i predicted as class j."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    def accumulate(self, predicted: LabelMap, truth: LabelMap) -> "ConfusionMatrix":
        if predicted.labels.shape != truth.labels.shape:
            raise ValueError("prediction and truth dimensions do not match")
        t = truth.labels.ravel().astype(np.int64)
        p = predicted.labels.ravel().astype(np.int64)
        keep = t != VOID_INDEX
        t, p = t[keep], p[keep]
        if t.size:
            flat = np.bincount(t * self.n_classes + p, minlength=self.n_classes**2)
            self.counts += flat.reshape(self.n_classes, self.n_classes)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.counts += other.counts
        return self


def per_pixel_accuracy(confusion: ConfusionMatrix) -> float:
    total = confusion.counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(confusion.counts) / total)


def per_class_accuracy(confusion: ConfusionMatrix) -> dict[int, float]:
    """Recall per class with nonzero ground-truth count."""
    row_sums = confusion.counts.sum(axis=1)
    diag = np.diag(confusion.counts)
    return {
        i: float(diag[i] / row_sums[i])
        for i in range(confusion.n_classes)
        if row_sums[i] > 0
    }


def mean_class_accuracy(confusion: ConfusionMatrix) -> float:
    per_class = per_class_accuracy(confusion)
    if not per_class:
        raise ValueError("no class has ground-truth pixels")
    return float(np.mean(list(per_class.values())))


def report_dict(confusion: ConfusionMatrix, classes: ClassTable) -> dict:
    per_class = per_class_accuracy(confusion)
    return {
        "per_pixel": per_pixel_accuracy(confusion),
        "mean_class": mean_class_accuracy(confusion),
        "per_class": {
            classes.names[i]: acc for i, acc in sorted(per_class.items())
        },
        "confusion": confusion.counts.tolist(),
    }


def save_report(confusion: ConfusionMatrix, classes: ClassTable, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_dict(confusion, classes), fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_report(confusion: ConfusionMatrix, classes: ClassTable) -> str:
    """Human-readable table: classes as columns, percentages to one decimal,
    untested classes shown as '-'."""
    per_class = per_class_accuracy(confusion)
    names = classes.names[1:]  # void is never reported
    cells = [
        f"{per_class[i] * 100:.1f}" if i in per_class else "-"
        for i in range(1, confusion.n_classes)
    ]
    widths = [max(len(n), len(c)) for n, c in zip(names, cells)]
    header = "  ".join(n.rjust(w) for n, w in zip(names, widths))
    values = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    lines = [
        header,
        values,
        f"per-pixel:  {per_pixel_accuracy(confusion) * 100:.1f}%",
        f"mean-class: {mean_class_accuracy(confusion) * 100:.1f}%",
    ]
    return "\n".join(lines)
