"""Minimal NIfTI-1 reader/writer for single-file .nii / .nii.gz volumes.

Covers exactly what the BraTS-layout loaders need: 3D volumes, the common
scalar dtypes, scl slope/intercept, and the sform/qform affine. Data is
returned as a C-contiguous array indexed (i, j, k) in voxel order, with the
affine mapping voxel indices to RAS+ millimetres.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

_HEADER_SIZE = 348
_MAGIC = b"n+1\x00"

# NIfTI datatype code -> numpy dtype
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class NiftiError(Exception):
    pass


def _open(path: Path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _quaternion_affine(hdr: dict) -> np.ndarray:
    b, c, d = hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if hdr["pixdim"][0] < 0 else 1.0
    scales = np.array([hdr["pixdim"][1], hdr["pixdim"][2], hdr["pixdim"][3] * qfac])
    affine = np.eye(4)
    affine[:3, :3] = rot * scales
    affine[:3, 3] = (hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"])
    return affine


def read_nifti(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a 3D NIfTI-1 volume. Returns (data, affine).

    Trailing singleton dimensions are squeezed; anything genuinely 4D+
    is rejected.
    """
    path = Path(path)
    with _open(path, "rb") as f:
        raw = f.read()

    if len(raw) < _HEADER_SIZE:
        raise NiftiError(f"{path}: truncated header")
    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr != _HEADER_SIZE:
        raise NiftiError(f"{path}: not a little-endian NIfTI-1 file (sizeof_hdr={sizeof_hdr})")

    dim = struct.unpack_from("<8h", raw, 40)
    datatype, bitpix = struct.unpack_from("<2h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    qform_code, sform_code = struct.unpack_from("<2h", raw, 252)
    quatern = struct.unpack_from("<6f", raw, 256)
    srow = np.array(struct.unpack_from("<12f", raw, 280), dtype=np.float64).reshape(3, 4)

    ndim = dim[0]
    if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
        raise NiftiError(f"{path}: only 3D volumes supported, dim={dim}")
    shape = tuple(dim[1:4])
    if datatype not in _DTYPES:
        raise NiftiError(f"{path}: unsupported datatype code {datatype}")
    dtype = np.dtype(_DTYPES[datatype])
    if dtype.itemsize * 8 != bitpix:
        raise NiftiError(f"{path}: bitpix {bitpix} inconsistent with datatype {datatype}")

    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = np.ascontiguousarray(data.reshape(shape, order="F"))

    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        data = data.astype(np.float32) * slope + scl_inter

    if sform_code > 0:
        affine = np.eye(4)
        affine[:3, :] = srow
    elif qform_code > 0:
        hdr = {
            "quatern_b": quatern[0],
            "quatern_c": quatern[1],
            "quatern_d": quatern[2],
            "qoffset_x": quatern[3],
            "qoffset_y": quatern[4],
            "qoffset_z": quatern[5],
            "pixdim": pixdim,
        }
        affine = _quaternion_affine(hdr)
    else:
        affine = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0])

    return data, affine


def write_nifti(path: str | Path, data: np.ndarray, affine: np.ndarray | None = None) -> None:
    """Write a 3D array as single-file NIfTI-1, gzipped when path ends .gz."""
    path = Path(path)
    if data.ndim != 3:
        raise NiftiError(f"expected 3D data, got shape {data.shape}")
    if affine is None:
        affine = np.eye(4)
    dtype = np.dtype(data.dtype)
    if dtype not in _DTYPE_CODES:
        raise NiftiError(f"unsupported dtype {dtype}")

    hdr = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, _HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, _DTYPE_CODES[dtype], dtype.itemsize * 8)
    spacings = [float(np.linalg.norm(affine[:3, j])) for j in range(3)]
    struct.pack_into("<8f", hdr, 76, 1.0, *spacings, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl slope/inter
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform off, sform on
    for r in range(3):
        struct.pack_into("<4f", hdr, 280 + 16 * r, *affine[r, :])
    hdr[344:348] = _MAGIC

    with _open(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00" * 4)  # no extensions
        f.write(np.asfortranarray(data).tobytes(order="F"))


def _axis_assignment(affine: np.ndarray) -> list[tuple[int, float]]:
    """For each voxel axis, the dominant world axis and its direction."""
    mat = affine[:3, :3]
    assignment: list[tuple[int, float] | None] = [None, None, None]
    used: set[int] = set()
    # resolve strongest alignments first so near-diagonal affines stay stable
    order = np.argsort([-float(np.max(np.abs(mat[:, j]))) for j in range(3)])
    for j in order:
        col = mat[:, j].copy()
        col[list(used)] = 0.0
        w = int(np.argmax(np.abs(col)))
        if col[w] == 0.0:
            raise NiftiError("degenerate affine: cannot infer orientation")
        assignment[j] = (w, float(np.sign(col[w])))
        used.add(w)
    return assignment  # type: ignore[return-value]


def to_ras(data: np.ndarray, affine: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reorient a volume so voxel axes align with +R, +A, +S.

    Works on nearest-axis orientation (BraTS volumes are axis-aligned); the
    returned affine reflects the permutation and flips applied.
    """
    assignment = _axis_assignment(affine)
    new_affine = affine.copy()

    flipped = data
    for j, (_, sign) in enumerate(assignment):
        if sign < 0:
            flipped = np.flip(flipped, axis=j)
            n = data.shape[j]
            new_affine[:3, 3] += new_affine[:3, j] * (n - 1)
            new_affine[:3, j] *= -1.0

    perm = [0, 0, 0]
    for j, (w, _) in enumerate(assignment):
        perm[w] = j
    out = np.ascontiguousarray(np.transpose(flipped, perm))
    final = new_affine.copy()
    final[:3, :3] = new_affine[:3, :3][:, perm]
    return out, final
