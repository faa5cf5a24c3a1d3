"""Spatial and intensity augmentation over VolumeSamples.

Spatial ops are restricted to exact transforms (axis flips and axial-plane
90-degree rotations) so binary masks and axis-aligned boxes survive without
interpolation; the box is always re-derived from the transformed WT mask
rather than transformed analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datamodel import VolumeSample
from .brats import derive_bbox


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5  # applied independently per axis
    rotate_prob: float = 0.75
    intensity_shift_range: tuple[float, float] = (-0.1, 0.1)
    intensity_scale_range: tuple[float, float] = (-0.1, 0.1)
    crop_size: tuple[int, int, int] = (96, 96, 96)
    seed: int = 0
    rotation_angles: tuple[int, ...] = (1, 2, 3)  # multiples of 90 degrees

    def __post_init__(self):
        for name in ("flip_prob", "rotate_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")


def augment(sample: VolumeSample, cfg: AugmentConfig, rng: np.random.Generator) -> VolumeSample:
    """One randomized augmentation pass; mask and image share spatial ops."""
    image = sample.image
    mask = sample.mask

    for axis in range(3):
        if rng.random() < cfg.flip_prob:
            image = np.flip(image, axis=axis + 1)
            mask = np.flip(mask, axis=axis + 1)

    if rng.random() < cfg.rotate_prob:
        k = int(rng.choice(cfg.rotation_angles))
        # axial plane: rotate about the z axis, i.e. in the (y, x) axes
        image = np.rot90(image, k=k, axes=(2, 3))
        mask = np.rot90(mask, k=k, axes=(2, 3))

    image = np.ascontiguousarray(image).astype(np.float32, copy=True)
    mask = np.ascontiguousarray(mask)

    lo_s, hi_s = cfg.intensity_shift_range
    lo_c, hi_c = cfg.intensity_scale_range
    for c in range(image.shape[0]):
        shift = rng.uniform(lo_s, hi_s) if hi_s > lo_s else lo_s
        scale = rng.uniform(lo_c, hi_c) if hi_c > lo_c else lo_c
        image[c] = image[c] * (1.0 + scale) + shift

    box = derive_bbox(mask[0]) if mask[0].any() else None
    return VolumeSample(sample.case_id, image, mask, sample.grade, box)
