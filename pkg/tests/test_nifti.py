import gzip
import struct

import numpy as np
import pytest

from tritask3d.dataio.nifti import NiftiError, read_nifti, to_ras, write_nifti


@pytest.mark.parametrize("dtype", [np.float32, np.uint8, np.int16])
def test_roundtrip(tmp_path, rng, dtype):
    if np.issubdtype(dtype, np.floating):
        data = rng.standard_normal((5, 6, 7)).astype(dtype)
    else:
        data = rng.integers(0, 100, size=(5, 6, 7)).astype(dtype)
    path = tmp_path / "vol.nii.gz"
    write_nifti(path, data)
    loaded, affine = read_nifti(path)
    np.testing.assert_array_equal(loaded, data)
    np.testing.assert_allclose(affine, np.eye(4))


def test_plain_nii_roundtrip(tmp_path, rng):
    data = rng.standard_normal((4, 4, 4)).astype(np.float32)
    path = tmp_path / "vol.nii"
    write_nifti(path, data)
    loaded, _ = read_nifti(path)
    np.testing.assert_array_equal(loaded, data)


def test_affine_roundtrip(tmp_path, rng):
    data = rng.standard_normal((3, 4, 5)).astype(np.float32)
    affine = np.eye(4)
    affine[:3, 3] = (-10.0, 5.0, 2.5)
    path = tmp_path / "vol.nii.gz"
    write_nifti(path, data, affine)
    _, loaded_affine = read_nifti(path)
    np.testing.assert_allclose(loaded_affine, affine, atol=1e-6)


def test_scl_scaling_applied(tmp_path, rng):
    data = rng.integers(0, 50, size=(3, 3, 3)).astype(np.int16)
    path = tmp_path / "vol.nii.gz"
    write_nifti(path, data)
    raw = gzip.decompress(path.read_bytes())
    patched = bytearray(raw)
    struct.pack_into("<2f", patched, 112, 2.0, 1.0)  # slope 2, intercept 1
    path.write_bytes(gzip.compress(bytes(patched)))
    loaded, _ = read_nifti(path)
    np.testing.assert_allclose(loaded, data.astype(np.float32) * 2.0 + 1.0)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(NiftiError):
        write_nifti(tmp_path / "bad.nii.gz", np.zeros((2, 2, 2), dtype=np.complex64))


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(NiftiError):
        read_nifti(path)


def _permuted_view(data, perm, flips):
    """Rearrange an RAS volume and produce the affine describing the result."""
    out = np.transpose(data, perm)
    affine = np.zeros((4, 4))
    affine[3, 3] = 1.0
    for new_axis, old_axis in enumerate(perm):
        affine[old_axis, new_axis] = 1.0
    for axis in flips:
        out = np.flip(out, axis=axis)
        affine[:3, 3] += affine[:3, axis] * (out.shape[axis] - 1)
        affine[:3, axis] *= -1.0
    return np.ascontiguousarray(out), affine


@pytest.mark.parametrize("perm", [(0, 1, 2), (2, 0, 1), (1, 2, 0), (2, 1, 0)])
@pytest.mark.parametrize("flips", [(), (0,), (1, 2), (0, 1, 2)])
def test_to_ras_recovers_canonical(rng, perm, flips):
    data = rng.standard_normal((4, 5, 6)).astype(np.float32)
    view, affine = _permuted_view(data, perm, flips)
    recovered, out_affine = to_ras(view, affine)
    np.testing.assert_array_equal(recovered, data)
    np.testing.assert_allclose(out_affine[:3, :3], np.eye(3), atol=1e-9)


def test_to_ras_identity_is_noop(rng):
    data = rng.standard_normal((3, 4, 5)).astype(np.float32)
    out, affine = to_ras(data, np.eye(4))
    np.testing.assert_array_equal(out, data)
    np.testing.assert_allclose(affine, np.eye(4))
