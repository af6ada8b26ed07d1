from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, TypedDict, Union

import numpy as np

from .exceptions import EmptyConfusionMatrixError, GridValidationError, ShapeMismatchError
from .grids import LabelMap

logger: logging.Logger = logging.getLogger(__name__)


class MetricsSummary(TypedDict):
    per_class_iou: List[Optional[float]]
    miou: float
    pixel_accuracy: float
    excluded_classes: List[int]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed [truth, prediction] over non-void pixels."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts: np.ndarray = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 1:
            raise GridValidationError(f"confusion matrix must be square and non-empty, got shape {counts.shape}")
        if counts.min() < 0:
            raise GridValidationError("confusion matrix counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, class_count: int) -> ConfusionMatrix:
        return cls(np.zeros((class_count, class_count), dtype=np.int64))

    @property
    def class_count(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, truth: LabelMap, pred: LabelMap) -> ConfusionMatrix:
    if truth.shape != pred.shape:
        raise ShapeMismatchError(truth.shape, pred.shape, "truth and prediction")
    if truth.class_count != pred.class_count or truth.class_count != cm.class_count:
        raise ShapeMismatchError(
            (truth.class_count,), (pred.class_count, cm.class_count), "class counts (truth vs prediction, matrix)"
        )

    valid: np.ndarray = truth.valid_mask & pred.valid_mask
    classes: int = cm.class_count
    flat: np.ndarray = classes * truth.ids[valid] + pred.ids[valid]
    tally: np.ndarray = np.bincount(flat, minlength=classes * classes).reshape(classes, classes)
    return ConfusionMatrix(cm.counts + tally)


def merge(left: ConfusionMatrix, right: ConfusionMatrix) -> ConfusionMatrix:
    if left.class_count != right.class_count:
        raise ShapeMismatchError(left.counts.shape, right.counts.shape, "confusion matrices")
    return ConfusionMatrix(left.counts + right.counts)


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN where the class never appears in truth or prediction."""
    if cm.total == 0:
        raise EmptyConfusionMatrixError()
    true_positive: np.ndarray = np.diag(cm.counts).astype(np.float64)
    union: np.ndarray = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - true_positive
    iou: np.ndarray = np.full(cm.class_count, np.nan)
    present: np.ndarray = union > 0
    iou[present] = true_positive[present] / union[present]
    return iou


def miou(cm: ConfusionMatrix) -> float:
    iou: np.ndarray = per_class_iou(cm)
    return float(np.mean(iou[~np.isnan(iou)]))


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyConfusionMatrixError()
    return float(np.trace(cm.counts)) / cm.total


def summarize(cm: ConfusionMatrix) -> MetricsSummary:
    iou: np.ndarray = per_class_iou(cm)
    excluded: List[int] = [int(index) for index in np.flatnonzero(np.isnan(iou))]
    if excluded:
        logger.warning(f"Classes {excluded} absent from truth and prediction; excluded from mIoU")
    return {
        "per_class_iou": [None if np.isnan(value) else float(value) for value in iou],
        "miou": miou(cm),
        "pixel_accuracy": pixel_accuracy(cm),
        "excluded_classes": excluded,
    }


def default_class_names(class_count: int) -> List[str]:
    return [f"class_{index}" for index in range(class_count)]


def metrics_csv(cm: ConfusionMatrix, class_names: Optional[Sequence[str]] = None) -> str:
    """
    Metrics as CSV text: a (name, value) header, one row per class, then the
    mIoU, pixel accuracy and excluded-class rows. Excluded classes have an
    empty IoU cell.
    """
    names: Sequence[str] = class_names or default_class_names(cm.class_count)
    if len(names) != cm.class_count:
        raise GridValidationError(f"expected {cm.class_count} class names, got {len(names)}")
    summary: MetricsSummary = summarize(cm)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["name", "value"])
    for name, value in zip(names, summary["per_class_iou"]):
        writer.writerow([name, "" if value is None else repr(value)])
    writer.writerow(["mIoU", repr(summary["miou"])])
    writer.writerow(["pixel_accuracy", repr(summary["pixel_accuracy"])])
    writer.writerow(["excluded_classes", ";".join(names[index] for index in summary["excluded_classes"])])
    return buffer.getvalue()


def write_metrics_csv(
    path: Union[str, Path], cm: ConfusionMatrix, class_names: Optional[Sequence[str]] = None
) -> None:
    Path(path).write_text(metrics_csv(cm, class_names), encoding="utf-8")
