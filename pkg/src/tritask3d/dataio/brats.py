"""BraTS-layout ingestion: modality stacking, label grouping, box derivation.

A case directory holds five volumes named ``<case_id>_<suffix>.nii.gz`` with
suffixes t1, t1ce, t2, flair and seg. Raw segmentation labels {1, 2, 4} are
grouped once at ingestion into three overlapping binary channels:
WT = {1, 2, 4}, TC = {1, 4}, ET = {4}. The grade comes from a dataset-level
``manifest.txt`` next to the case directory or, failing that, from an
ancestor directory named HGG or LGG.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..datamodel import MODALITIES, BoundingBox3D, Grade, VolumeSample
from .nifti import read_nifti, to_ras, write_nifti

_VALID_LABELS = (0, 1, 2, 4)


class DataError(Exception):
    pass


def derive_bbox(wt_mask: np.ndarray) -> BoundingBox3D:
    """Tight half-open bound of the foreground voxels of a 3D mask."""
    coords = np.nonzero(wt_mask)
    if coords[0].size == 0:
        raise DataError("no foreground: cannot derive a box from an empty mask")
    mins = tuple(int(c.min()) for c in coords)
    maxs = tuple(int(c.max()) + 1 for c in coords)
    return BoundingBox3D(mins, maxs)


def group_labels(labels: np.ndarray) -> np.ndarray:
    """Raw BraTS labels {0,1,2,4} -> (3, D, H, W) binary WT/TC/ET channels."""
    unknown = np.setdiff1d(np.unique(labels), _VALID_LABELS)
    if unknown.size:
        raise DataError(f"unknown label values {unknown.tolist()}; expected subset of {_VALID_LABELS}")
    wt = np.isin(labels, (1, 2, 4))
    tc = np.isin(labels, (1, 4))
    et = labels == 4
    return np.stack([wt, tc, et]).astype(np.uint8)


def ungroup_labels(mask: np.ndarray) -> np.ndarray:
    """Inverse of group_labels for nested WT/TC/ET channels."""
    wt, tc, et = mask[0].astype(bool), mask[1].astype(bool), mask[2].astype(bool)
    labels = np.zeros(wt.shape, dtype=np.uint8)
    labels[wt & ~tc] = 2
    labels[tc & ~et] = 1
    labels[et] = 4
    return labels


def _canonical(vol: np.ndarray, affine: np.ndarray) -> np.ndarray:
    """RAS-reorient and flip voxel order (x, y, z) -> array order (z, y, x)."""
    ras, _ = to_ras(vol, affine)
    return np.ascontiguousarray(ras.transpose(2, 1, 0))


def read_manifest(path: Path) -> dict[str, Grade]:
    grades: dict[str, Grade] = {}
    for line in path.read_text().splitlines():
        parts = line.split()
        if len(parts) >= 2:
            grades[parts[0]] = Grade(parts[1])
    return grades


def _resolve_grade(case_dir: Path, case_id: str) -> Grade:
    manifest = case_dir.parent / "manifest.txt"
    if manifest.exists():
        grades = read_manifest(manifest)
        if case_id in grades:
            return grades[case_id]
    for parent in case_dir.resolve().parents:
        if parent.name in (Grade.HGG.value, Grade.LGG.value):
            return Grade(parent.name)
    raise DataError(
        f"cannot resolve grade for {case_id}: no manifest.txt entry and no HGG/LGG ancestor directory"
    )


def load_case(dir_path: str | Path, case_id: str) -> VolumeSample:
    """Load one case directory into a canonical VolumeSample."""
    case_dir = Path(dir_path)
    channels = []
    shape = None
    for suffix in MODALITIES:
        f = case_dir / f"{case_id}_{suffix}.nii.gz"
        if not f.exists():
            raise DataError(f"missing modality file {f}")
        vol, affine = read_nifti(f)
        vol = _canonical(vol.astype(np.float32), affine)
        if shape is None:
            shape = vol.shape
        elif vol.shape != shape:
            raise DataError(f"{f}: spatial shape {vol.shape} != {shape}")
        channels.append(vol)
    image = np.stack(channels)

    seg_file = case_dir / f"{case_id}_seg.nii.gz"
    if not seg_file.exists():
        raise DataError(f"missing label file {seg_file}")
    labels, affine = read_nifti(seg_file)
    labels = _canonical(np.rint(labels).astype(np.int16), affine)
    if labels.shape != shape:
        raise DataError(f"{seg_file}: spatial shape {labels.shape} != {shape}")
    mask = group_labels(labels)

    box = derive_bbox(mask[0]) if mask[0].any() else None
    return VolumeSample(
        case_id=case_id,
        image=image,
        mask=mask,
        grade=_resolve_grade(case_dir, case_id),
        box=box,
    )


def write_case(sample: VolumeSample, dir_path: str | Path, update_manifest: bool = True) -> Path:
    """Persist a sample in the BraTS layout load_case reads; roundtrip-exact.

    Volumes are written with an identity RAS affine and array order (z, y, x)
    mapped back to voxel order (x, y, z).
    """
    case_dir = Path(dir_path)
    case_dir.mkdir(parents=True, exist_ok=True)
    for c, suffix in enumerate(MODALITIES):
        vol = np.ascontiguousarray(sample.image[c].transpose(2, 1, 0)).astype(np.float32)
        write_nifti(case_dir / f"{sample.case_id}_{suffix}.nii.gz", vol)
    labels = ungroup_labels(sample.mask)
    write_nifti(case_dir / f"{sample.case_id}_seg.nii.gz", labels.transpose(2, 1, 0).copy())

    if update_manifest:
        manifest = case_dir.parent / "manifest.txt"
        entries: dict[str, str] = {}
        if manifest.exists():
            for line in manifest.read_text().splitlines():
                if line.strip():
                    entries[line.split()[0]] = line
        corners = ""
        if sample.box is not None:
            b = sample.box.rounded()
            corners = " " + " ".join(
                str(int(v)) for v in (*b.min_corner, *b.max_corner)
            )
        entries[sample.case_id] = f"{sample.case_id} {sample.grade.value}{corners}"
        manifest.write_text("\n".join(entries[k] for k in sorted(entries)) + "\n")
    return case_dir


def normalize(image: np.ndarray) -> np.ndarray:
    """Per-channel z-score over nonzero voxels; zero background preserved.

    A channel with zero variance on its nonzero support is zeroed out with a
    warning instead of dividing by zero.
    """
    out = np.zeros_like(image, dtype=np.float32)
    for c in range(image.shape[0]):
        chan = image[c]
        nz = chan != 0
        if not nz.any():
            continue
        vals = chan[nz]
        std = vals.std()
        if std == 0:
            warnings.warn(f"channel {c} has zero variance on nonzero voxels; output zeroed")
            continue
        out[c][nz] = (vals - vals.mean()) / std
    return out


def center_crop(sample: VolumeSample, size: tuple[int, int, int]) -> VolumeSample:
    """Crop image and mask about the volume center; box re-derived from WT."""
    extent = sample.extent
    if any(s > e for s, e in zip(size, extent)):
        raise DataError(f"crop size {size} exceeds volume extent {extent}")
    offsets = tuple((e - s) // 2 for s, e in zip(size, extent))
    sl = tuple(slice(o, o + s) for o, s in zip(offsets, size))
    image = np.ascontiguousarray(sample.image[(slice(None),) + sl])
    mask = np.ascontiguousarray(sample.mask[(slice(None),) + sl])
    box = derive_bbox(mask[0]) if mask[0].any() else None
    return VolumeSample(sample.case_id, image, mask, sample.grade, box)


def list_cases(root: str | Path) -> list[tuple[Path, str]]:
    """All case directories under a dataset root, recursively."""
    root = Path(root)
    cases = []
    for seg in sorted(root.rglob("*_seg.nii.gz")):
        case_id = seg.name[: -len("_seg.nii.gz")]
        cases.append((seg.parent, case_id))
    return cases
