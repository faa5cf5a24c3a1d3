"""Average precision / recall for 3D box detection.

Matching is greedy per case: detections in descending score order claim the
unmatched ground-truth box of highest IoU at or above the threshold. AP is
the area under the all-point interpolated precision-recall curve pooled
across cases; AR is the recall once every retained detection is consumed.
"""

from __future__ import annotations

import numpy as np

from ..datamodel import BoundingBox3D, Detection
from ..decoders.detection import iou_3d

# rounded so an IoU of exactly 0.30 passes the 0.30 threshold
SWEEP_THRESHOLDS = tuple(round(0.10 + 0.05 * i, 2) for i in range(9))  # 0.10 .. 0.50


def _match_case(
    dets: list[Detection], gts: list[BoundingBox3D], iou_thr: float
) -> list[tuple[float, bool]]:
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    records = []
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            iou = iou_3d(dets[i].box, gt)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= iou_thr:
            taken[best_j] = True
            records.append((dets[i].score, True))
        else:
            records.append((dets[i].score, False))
    return records


def average_precision(
    dets_per_case: list[list[Detection]],
    gts_per_case: list[list[BoundingBox3D]],
    iou_thr: float,
) -> tuple[float, float]:
    """(AP, AR) at one IoU threshold.

    With no ground truth anywhere the pair is vacuously (1, 1) when there are
    no detections either, otherwise (0, 0).
    """
    total_gt = sum(len(g) for g in gts_per_case)
    records: list[tuple[float, int, bool]] = []
    for case_idx, (dets, gts) in enumerate(zip(dets_per_case, gts_per_case)):
        for score, is_tp in _match_case(dets, gts, iou_thr):
            records.append((score, case_idx, is_tp))
    if total_gt == 0:
        return (1.0, 1.0) if not records else (0.0, 0.0)
    if not records:
        return 0.0, 0.0

    records.sort(key=lambda r: (-r[0], r[1]))
    tps = np.array([r[2] for r in records], dtype=np.float64)
    tp_cum = np.cumsum(tps)
    fp_cum = np.cumsum(1.0 - tps)
    recall = tp_cum / total_gt
    precision = tp_cum / (tp_cum + fp_cum)

    # all-point interpolation: running max of precision from the right
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    ap = float(np.sum((recall - prev_recall) * interp))
    ar = float(recall[-1])
    return ap, ar


def map_sweep(
    dets_per_case: list[list[Detection]],
    gts_per_case: list[list[BoundingBox3D]],
) -> dict[str, float]:
    """mAP/mAR over the 0.10:0.50 step 0.05 threshold sweep plus the 0.5 point."""
    aps, ars = [], []
    for thr in SWEEP_THRESHOLDS:
        ap, ar = average_precision(dets_per_case, gts_per_case, thr)
        aps.append(ap)
        ars.append(ar)
    return {
        "map_sweep": float(np.mean(aps)),
        "map_50": aps[-1],
        "mar_sweep": float(np.mean(ars)),
        "mar_50": ars[-1],
    }
