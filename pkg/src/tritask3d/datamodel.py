"""Core value types shared by every other module.

Array layout convention: volumes are channel-first with spatial axes ordered
(z, y, x), i.e. image arrays are (4, D, H, W) and masks (3, D, H, W). Boxes
live in the same (z, y, x) voxel index space with half-open corners, so a
voxel v belongs to a box iff min <= v < max on every axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

# Fixed channel orders; the loaders group raw labels once at ingestion.
MODALITIES = ("t1", "t1ce", "t2", "flair")
REGIONS = ("wt", "tc", "et")


class Grade(str, Enum):
    HGG = "HGG"
    LGG = "LGG"


@dataclass(frozen=True)
class BoundingBox3D:
    """Axis-aligned box in voxel index space, half-open corners.

    Corners are (z, y, x) triples. Integer corners index voxels directly;
    real-valued corners are permitted for raw detector outputs before
    rounding.
    """

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "min_corner", tuple(float(c) for c in self.min_corner))
        object.__setattr__(self, "max_corner", tuple(float(c) for c in self.max_corner))

    @property
    def sizes(self) -> tuple[float, float, float]:
        return tuple(hi - lo for lo, hi in zip(self.min_corner, self.max_corner))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.min_corner, self.max_corner))

    @property
    def volume(self) -> float:
        v = 1.0
        for s in self.sizes:
            v *= s
        return v

    def is_well_ordered(self) -> bool:
        return all(hi > lo for lo, hi in zip(self.min_corner, self.max_corner))

    def rounded(self) -> "BoundingBox3D":
        return BoundingBox3D(
            tuple(int(round(c)) for c in self.min_corner),
            tuple(int(round(c)) for c in self.max_corner),
        )

    def clipped(self, extent: Sequence[int]) -> "BoundingBox3D":
        lo = tuple(min(max(c, 0.0), float(e)) for c, e in zip(self.min_corner, extent))
        hi = tuple(min(max(c, 0.0), float(e)) for c, e in zip(self.max_corner, extent))
        return BoundingBox3D(lo, hi)

    def as_array(self) -> np.ndarray:
        return np.array([self.min_corner, self.max_corner], dtype=np.float64)


@dataclass
class VolumeSample:
    """One case: multi-modal image, grouped region mask, grade and box.

    ``box`` is the tight bound of the WT channel, or None when WT is empty
    (a sample whose crop removed all tumor is unusable for training).
    """

    case_id: str
    image: np.ndarray  # (4, D, H, W) float32
    mask: np.ndarray  # (3, D, H, W) binary, channels (WT, TC, ET)
    grade: Grade
    box: Optional[BoundingBox3D]

    @property
    def extent(self) -> tuple[int, int, int]:
        return tuple(self.image.shape[1:])

    @property
    def usable(self) -> bool:
        return self.box is not None


@dataclass
class FeaturePyramid:
    """Ordered multi-scale encoder outputs, stage 0 (input resolution) to 5.

    Stage i has spatial extent (S / 2**i) per axis for an S-cube input and
    channel counts (E, E, 2E, 4E, 8E, 16E) for embedding width E; stage 0 is
    the input-resolution convolutional feature. The standard four-stage
    encoder yields exactly 6 stages; reduced-depth encoders (used for cheap
    gradient checks) yield 2 + num_stages.
    """

    stages: list

    def __post_init__(self):
        if len(self.stages) < 3:
            raise ValueError(f"expected at least 3 pyramid stages, got {len(self.stages)}")

    def __getitem__(self, i):
        return self.stages[i]

    def __len__(self):
        return len(self.stages)

    def shape_schedule(self) -> list[tuple[int, ...]]:
        return [tuple(s.shape) for s in self.stages]


@dataclass(frozen=True)
class GradePrediction:
    """Two-class grading output; probability is for the HGG class."""

    logits: tuple[float, float]  # (LGG, HGG)
    probability: float

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability out of range: {self.probability}")

    @property
    def grade(self) -> Grade:
        return Grade.HGG if self.probability >= 0.5 else Grade.LGG


@dataclass(frozen=True)
class Detection:
    """A scored candidate box; corners may be real-valued."""

    box: BoundingBox3D
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")


def _tight_bound(mask: np.ndarray) -> Optional[tuple[tuple[int, ...], tuple[int, ...]]]:
    coords = np.argwhere(mask)
    if coords.size == 0:
        return None
    return tuple(coords.min(axis=0).tolist()), tuple((coords.max(axis=0) + 1).tolist())


def validate_sample(s: VolumeSample) -> list[str]:
    """Check every VolumeSample invariant; returns one message per violation.

    Validation reports; it never raises.
    """
    violations: list[str] = []

    if s.image.ndim != 4 or s.image.shape[0] != len(MODALITIES):
        violations.append(f"image shape {s.image.shape} is not (4, D, H, W)")
    if s.mask.ndim != 4 or s.mask.shape[0] != len(REGIONS):
        violations.append(f"mask shape {s.mask.shape} is not (3, D, H, W)")
        return violations
    if s.image.ndim == 4 and s.mask.shape[1:] != s.image.shape[1:]:
        violations.append("mask and image spatial extents differ")

    if not np.isin(s.mask, (0, 1)).all():
        violations.append("mask not binary")
        return violations

    wt, tc, et = s.mask[0], s.mask[1], s.mask[2]
    if np.any(tc > wt):
        violations.append("nesting: TC ⊄ WT")
    if np.any(et > tc):
        violations.append("nesting: ET ⊄ TC")

    if not isinstance(s.grade, Grade):
        violations.append(f"grade {s.grade!r} is not a Grade")

    bound = _tight_bound(wt)
    if bound is None:
        if s.box is not None:
            violations.append("box inconsistent with empty WT")
    elif s.box is None:
        violations.append("box missing for nonempty WT")
    else:
        if not s.box.is_well_ordered():
            violations.append("box not well-ordered")
        if s.box.min_corner != bound[0] or s.box.max_corner != bound[1]:
            violations.append(
                f"box {s.box.min_corner}->{s.box.max_corner} is not the tight WT bound "
                f"{bound[0]}->{bound[1]}"
            )
        extent = s.mask.shape[1:]
        if any(c < 0 for c in s.box.min_corner) or any(
            c > e for c, e in zip(s.box.max_corner, extent)
        ):
            violations.append("box outside volume extent")

    return violations
