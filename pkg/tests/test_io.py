import gzip
import struct

import numpy as np
import pytest

from valve4d import VolumeFormatError
from valve4d.io import (
    load_field,
    load_scalar_volume,
    load_volume,
    save_field,
    save_scalar_volume,
    save_volume,
)
from valve4d.volume import DisplacementField, LabelVolume, ScalarVolume, VolumeGeometry

from conftest import unit_geometry


def _label_volume(seed=0):
    rng = np.random.default_rng(seed)
    g = VolumeGeometry((6, 5, 4), (0.5, 0.75, 1.25), (-1.0, 2.0, 3.5), np.eye(3))
    return LabelVolume(g, rng.integers(0, 7, size=(6, 5, 4)).astype(np.uint8))


@pytest.mark.parametrize("name", ["vol.nii", "vol.nii.gz", "vol.mha"])
def test_label_volume_round_trip(tmp_path, name):
    vol = _label_volume()
    path = tmp_path / name
    save_volume(vol, path)
    back = load_volume(path)
    assert np.array_equal(back.data, vol.data)
    assert back.geometry.matches(vol.geometry)


def test_round_trip_with_rotated_direction(tmp_path):
    c, s = np.cos(0.4), np.sin(0.4)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    g = VolumeGeometry((4, 4, 4), (1.0, 1.0, 2.0), (5.0, -3.0, 0.0), rot)
    data = np.zeros((4, 4, 4), dtype=np.uint8)
    data[1, 2, 3] = 4
    vol = LabelVolume(g, data)
    path = tmp_path / "rot.nii"
    save_volume(vol, path)
    back = load_volume(path)
    assert np.allclose(back.geometry.direction, rot, atol=1e-6)
    assert np.allclose(
        back.geometry.voxel_to_world([1, 2, 3]), g.voxel_to_world([1, 2, 3]), atol=1e-4
    )


def test_nifti_header_fields_by_struct(tmp_path):
    """Cross-check the writer against a hand-decoded header."""
    vol = _label_volume()
    path = tmp_path / "hdr.nii"
    save_volume(vol, path)
    raw = path.read_bytes()
    assert struct.unpack_from("<i", raw, 0)[0] == 348
    dim = struct.unpack_from("<8h", raw, 40)
    assert dim[0] == 3 and dim[1:4] == vol.geometry.dims
    datatype, bitpix = struct.unpack_from("<hh", raw, 70)
    assert datatype == 2 and bitpix == 8  # uint8
    pixdim = struct.unpack_from("<8f", raw, 76)
    assert pixdim[1:4] == pytest.approx(vol.geometry.spacing)
    vox_offset = struct.unpack_from("<f", raw, 108)[0]
    assert vox_offset == 352.0
    srow_x = struct.unpack_from("<4f", raw, 280)
    assert srow_x == pytest.approx((0.5, 0, 0, -1.0))
    assert raw[344:347] == b"n+1"
    payload = np.frombuffer(raw[352:], dtype="<u1").reshape((6, 5, 4), order="F")
    assert np.array_equal(payload, vol.data)


def test_gzip_write_is_gzip(tmp_path):
    vol = _label_volume()
    path = tmp_path / "z.nii.gz"
    save_volume(vol, path)
    assert path.read_bytes()[:2] == b"\x1f\x8b"
    with gzip.open(path, "rb") as fh:
        assert struct.unpack("<i", fh.read(4))[0] == 348


def test_scalar_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    g = unit_geometry((5, 5, 5), spacing=(0.5, 0.5, 0.5))
    vol = ScalarVolume(g, rng.normal(size=(5, 5, 5)).astype(np.float32))
    for name in ("s.nii.gz", "s.mha"):
        save_scalar_volume(vol, tmp_path / name)
        back = load_scalar_volume(tmp_path / name)
        assert np.allclose(back.data, vol.data)
        assert back.geometry.matches(g)


def test_field_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    g = unit_geometry((4, 5, 6), spacing=(1.0, 0.5, 0.5))
    field = DisplacementField(g, rng.normal(size=(4, 5, 6, 3)).astype(np.float32))
    path = tmp_path / "f.nii.gz"
    save_field(field, path)
    back = load_field(path)
    assert np.array_equal(back.vectors, field.vectors)
    assert back.geometry.matches(g)
    with pytest.raises(VolumeFormatError, match="NIfTI only"):
        save_field(field, tmp_path / "f.mha")


def test_load_volume_validates_labels(tmp_path):
    g = unit_geometry((3, 3, 3))
    data = np.full((3, 3, 3), 9, dtype=np.uint8)
    # write bypassing LabelVolume validation
    from valve4d.io import _write_nifti

    path = tmp_path / "bad.nii"
    _write_nifti(path, data, g)
    with pytest.raises(Exception, match="unknown label"):
        load_volume(path)


def test_load_volume_rejects_float_payload(tmp_path):
    g = unit_geometry((3, 3, 3))
    vol = ScalarVolume(g, np.zeros((3, 3, 3), dtype=np.float32))
    path = tmp_path / "f.nii"
    save_scalar_volume(vol, path)
    with pytest.raises(VolumeFormatError, match="non-integer"):
        load_volume(path)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(VolumeFormatError, match="no such file"):
        load_volume(tmp_path / "nope.nii")
    txt = tmp_path / "nope.txt"
    txt.write_text("not a volume")
    with pytest.raises(VolumeFormatError, match="unsupported volume format"):
        load_volume(txt)
    bad = tmp_path / "trunc.nii"
    bad.write_bytes(b"\x00" * 100)
    with pytest.raises(VolumeFormatError, match="truncated"):
        load_volume(bad)
    nomagic = tmp_path / "nomagic.nii"
    nomagic.write_bytes(struct.pack("<i", 348) + b"\x00" * 400)
    with pytest.raises(VolumeFormatError, match="magic"):
        load_volume(nomagic)


def test_truncated_payload(tmp_path):
    vol = _label_volume()
    path = tmp_path / "cut.nii"
    save_volume(vol, path)
    full = path.read_bytes()
    path.write_bytes(full[:-10])
    with pytest.raises(VolumeFormatError, match="truncated NIfTI payload"):
        load_volume(path)


def test_mha_header_round_trip(tmp_path):
    vol = _label_volume(3)
    path = tmp_path / "m.mha"
    save_volume(vol, path)
    text = path.read_bytes().split(b"ElementDataFile")[0].decode()
    assert "NDims = 3" in text
    assert "ElementType = MET_UCHAR" in text
    assert "DimSize = 6 5 4" in text
