"""Synthetic phantom volumes for desk-scale training and tests.

A phantom is Gaussian background noise plus three nested ellipsoids (WT ⊇ TC
⊇ ET) sharing a center, with modality-dependent intensity elevations. The
grade is assigned from the geometry, by default from the ET volume fraction
of WT, so grading is learnable from the segmentation output alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datamodel import Grade, VolumeSample
from .brats import derive_bbox, write_case

# additive intensity per (modality, region); rows t1, t1ce, t2, flair
_ELEVATIONS = {
    "wt": (0.2, 0.1, 1.2, 1.5),
    "tc": (-0.5, 0.4, 0.3, 0.2),
    "et": (0.1, 1.8, 0.2, 0.1),
}


@dataclass
class GradeRule:
    """Grade from geometry: HGG when the ET/WT volume ratio reaches threshold."""

    metric: str = "et_fraction"
    threshold: float = 0.02

    def __call__(self, mask: np.ndarray) -> Grade:
        if self.metric != "et_fraction":
            raise ValueError(f"unknown grade rule metric {self.metric!r}")
        wt = float(mask[0].sum())
        if wt == 0:
            return Grade.LGG
        return Grade.HGG if float(mask[2].sum()) / wt >= self.threshold else Grade.LGG


@dataclass
class PhantomSpec:
    extent: tuple[int, int, int] = (64, 64, 64)
    center_range: tuple[float, float] = (0.35, 0.65)  # fraction of each axis
    wt_radius_range: tuple[float, float] = (8.0, 14.0)  # voxels
    tc_fraction_range: tuple[float, float] = (0.45, 0.75)  # of the WT radii
    et_fraction_range: tuple[float, float] = (0.0, 0.9)  # of the TC radii
    axis_jitter: tuple[float, float] = (0.75, 1.25)
    grade_rule: GradeRule = field(default_factory=GradeRule)
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.tc_fraction_range[1] >= 1.0 or self.et_fraction_range[1] >= 1.0:
            raise ValueError("region fraction ranges must stay below 1 so ellipsoids nest")
        if self.wt_radius_range[0] <= 0:
            raise ValueError("WT radius must be positive")


def _ellipsoid(extent, center, radii) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, e) for e in extent)]
    acc = np.zeros(extent, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / max(r, 1e-9)) ** 2
    return (acc <= 1.0).astype(np.uint8)


def synth_case(
    spec: PhantomSpec, rng: np.random.Generator, case_id: str = "phantom"
) -> VolumeSample:
    extent = spec.extent
    center = [rng.uniform(lo * e, hi * e) for e, (lo, hi) in zip(extent, [spec.center_range] * 3)]
    base = rng.uniform(*spec.wt_radius_range)
    wt_radii = base * rng.uniform(*spec.axis_jitter, size=3)
    tc_radii = wt_radii * rng.uniform(*spec.tc_fraction_range)
    et_radii = tc_radii * rng.uniform(*spec.et_fraction_range)

    wt = _ellipsoid(extent, center, wt_radii)
    tc = _ellipsoid(extent, center, tc_radii)
    et = _ellipsoid(extent, center, et_radii) if et_radii.min() >= 0.5 else np.zeros(extent, np.uint8)
    mask = np.stack([wt, tc, et])

    image = 1.0 + spec.noise_sigma * rng.standard_normal((4,) + tuple(extent))
    for region, mask_c in zip(("wt", "tc", "et"), mask):
        for m, lift in enumerate(_ELEVATIONS[region]):
            image[m][mask_c == 1] += lift
    image = image.astype(np.float32)

    return VolumeSample(
        case_id=case_id,
        image=image,
        mask=mask,
        grade=spec.grade_rule(mask),
        box=derive_bbox(wt) if wt.any() else None,
    )


def make_dataset(
    spec: PhantomSpec,
    n_cases: int,
    out_dir: str | Path,
    seed: int = 0,
    balance: bool = True,
) -> list[VolumeSample]:
    """Write n phantom cases in BraTS layout plus a manifest; returns samples.

    With balance=True, cases alternate grades (resampled per-case until the
    target grade comes up) so small datasets contain both classes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(n_cases):
        rng = np.random.default_rng([seed, i])
        case_id = f"phantom_{i:03d}"
        want = (Grade.HGG, Grade.LGG)[i % 2] if balance else None
        sample = synth_case(spec, rng, case_id)
        tries = 0
        while want is not None and sample.grade is not want:
            sample = synth_case(spec, rng, case_id)
            tries += 1
            if tries > 200:
                raise RuntimeError(f"could not sample a {want.value} phantom; check grade rule")
        write_case(sample, out / case_id)
        samples.append(sample)
    return samples
