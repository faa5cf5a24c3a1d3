"""Binary grading metrics; HGG is the positive class."""

from __future__ import annotations

from ..datamodel import Grade, GradePrediction


def classification_metrics(
    preds: list[GradePrediction], gts: list[Grade]
) -> tuple[float | None, float | None, float | None]:
    """(accuracy, sensitivity, specificity); undefined denominators -> None."""
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth counts differ")
    tp = fp = tn = fn = 0
    for pred, gt in zip(preds, gts):
        positive = pred.grade is Grade.HGG
        actual = gt is Grade.HGG
        if positive and actual:
            tp += 1
        elif positive and not actual:
            fp += 1
        elif not positive and actual:
            fn += 1
        else:
            tn += 1
    n = tp + fp + tn + fn
    acc = (tp + tn) / n if n else None
    sen = tp / (tp + fn) if (tp + fn) else None
    spe = tn / (tn + fp) if (tn + fp) else None
    return acc, sen, spe
