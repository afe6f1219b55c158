"""Pixel accuracy, mean accuracy, mean IU and frequency-weighted IU.

All four are read off one confusion matrix ``counts[i, j]`` = pixels of
true class ``i`` predicted as ``j``. With ``t_i`` the ground-truth pixel count
of class ``i`` (row sum) and ``p_i`` the predicted count (column sum),
``IU_i = n_ii / (t_i + p_i - n_ii)``.
"""

from __future__ import annotations

import numpy as np


class ConfusionMatrix:
    def __init__(self, num_classes: int, counts=None):
        if num_classes < 1:
            raise ValueError("need at least one class")
        self.num_classes = int(num_classes)
        if counts is None:
            self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (num_classes, num_classes) or (counts < 0).any():
                raise ValueError("counts must be a non-negative n_c x n_c matrix")
            self.counts = counts.copy()

    @classmethod
    def from_counts(cls, counts) -> "ConfusionMatrix":
        counts = np.asarray(counts)
        return cls(len(counts), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, pred, truth) -> "ConfusionMatrix":
        """Add one prediction/ground-truth pair in place; returns ``self``."""
        pred, truth = np.asarray(pred), np.asarray(truth)
        if pred.shape != truth.shape:
            raise ValueError(f"prediction shape {pred.shape} != ground truth shape {truth.shape}")
        n = self.num_classes
        for name, a in (("prediction", pred), ("ground truth", truth)):
            if a.size and (a.min() < 0 or a.max() >= n):
                raise ValueError(f"{name} label out of range [0, {n})")
        flat = truth.ravel().astype(np.int64) * n + pred.ravel()
        self.counts += np.bincount(flat, minlength=n * n).reshape(n, n)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices with different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def _check(self):
        if self.total == 0:
            raise ValueError("confusion matrix is empty")

    def class_iu(self) -> np.ndarray:
        """Per-class IU; NaN for classes absent from both truth and prediction."""
        c = self.counts.astype(np.float64)
        tp = np.diag(c)
        union = c.sum(axis=1) + c.sum(axis=0) - tp
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, tp / union, np.nan)

    def pixel_accuracy(self) -> float:
        self._check()
        return float(np.trace(self.counts) / self.total)

    def mean_accuracy(self) -> float:
        """Mean recall over the classes present in the ground truth."""
        self._check()
        t = self.counts.sum(axis=1)
        present = t > 0
        return float(np.mean(np.diag(self.counts)[present] / t[present]))

    def mean_iu(self) -> float:
        self._check()
        return float(np.nanmean(self.class_iu()))

    def fw_iu(self) -> float:
        self._check()
        t = self.counts.sum(axis=1)
        iu = np.nan_to_num(self.class_iu())
        return float((t * iu).sum() / t.sum())

    def summary(self) -> dict[str, float]:
        return {
            "pixel_acc": self.pixel_accuracy(),
            "mean_acc": self.mean_accuracy(),
            "mean_iu": self.mean_iu(),
            "fw_iu": self.fw_iu(),
        }


def confusion(pred, truth, num_classes: int) -> ConfusionMatrix:
    return ConfusionMatrix(num_classes).accumulate(pred, truth)


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    return cm.pixel_accuracy()


def mean_accuracy(cm: ConfusionMatrix) -> float:
    return cm.mean_accuracy()


def mean_iu(cm: ConfusionMatrix) -> float:
    return cm.mean_iu()


def fw_iu(cm: ConfusionMatrix) -> float:
    return cm.fw_iu()
