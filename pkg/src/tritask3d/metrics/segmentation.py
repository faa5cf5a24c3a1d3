"""Overlap and surface-distance metrics for binary 3D masks."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def dice_metric(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|); both empty -> 1.0, exactly one empty -> 0.0."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    p, g = int(pred.sum()), int(gt.sum())
    if p == 0 and g == 0:
        return 1.0
    if p == 0 or g == 0:
        return 0.0
    inter = int(np.logical_and(pred, gt).sum())
    return 2.0 * inter / (p + g)


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Coordinates of foreground voxels with a 6-neighbor background voxel
    (the volume border counts as background)."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1)
    interior = np.ones_like(mask)
    for axis in range(3):
        for shift in (1, -1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return np.argwhere(mask & ~interior)


def hausdorff(pred: np.ndarray, gt: np.ndarray, percentile: float = 95.0) -> float | None:
    """Symmetric percentile Hausdorff distance between mask surfaces, in voxels.

    Percentile 100 gives the classical Hausdorff distance. Returns None when
    either mask is empty (undefined, reported as missing).
    """
    surf_a = surface_voxels(pred)
    surf_b = surface_voxels(gt)
    if len(surf_a) == 0 or len(surf_b) == 0:
        return None
    d_ab = cKDTree(surf_b).query(surf_a)[0]
    d_ba = cKDTree(surf_a).query(surf_b)[0]
    return float(max(np.percentile(d_ab, percentile), np.percentile(d_ba, percentile)))
