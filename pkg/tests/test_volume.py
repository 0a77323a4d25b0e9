import numpy as np
import pytest

from valve4d import (
    EmptyLabelError,
    GeometryMismatchError,
    PhaseTag,
    UnknownLabelError,
)
from valve4d.volume import (
    DisplacementField,
    LabelVolume,
    ScalarVolume,
    Series4D,
    VolumeGeometry,
    require_same_geometry,
    split_frames,
    validate_labels,
)

from conftest import unit_geometry


def test_geometry_rejects_bad_dims_and_spacing():
    with pytest.raises(ValueError, match="dims"):
        VolumeGeometry((0, 4, 4), (1, 1, 1), (0, 0, 0), np.eye(3))
    with pytest.raises(ValueError, match="spacing"):
        VolumeGeometry((4, 4, 4), (1.0, 0.0, 1.0), (0, 0, 0), np.eye(3))


def test_geometry_rejects_non_orthonormal_direction():
    with pytest.raises(ValueError, match="orthonormal"):
        VolumeGeometry((4, 4, 4), (1, 1, 1), (0, 0, 0), np.eye(3) * 2.0)


def test_world_round_trip_with_rotation():
    c, s = np.cos(0.3), np.sin(0.3)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    g = VolumeGeometry((5, 6, 7), (0.5, 0.7, 1.1), (3.0, -2.0, 1.0), rot)
    rng = np.random.default_rng(0)
    idx = rng.uniform(0, 4, size=(20, 3))
    back = g.world_to_voxel(g.voxel_to_world(idx))
    assert np.allclose(back, idx, atol=1e-12)


def test_affine_matches_voxel_to_world():
    g = VolumeGeometry((4, 4, 4), (0.5, 0.7, 1.1), (3.0, -2.0, 1.0), np.eye(3))
    idx = np.array([1.0, 2.0, 3.0])
    hom = g.affine() @ np.append(idx, 1.0)
    assert np.allclose(hom[:3], g.voxel_to_world(idx))


def test_voxel_diagonal():
    g = unit_geometry((4, 4, 4), spacing=(3.0, 4.0, 12.0))
    assert g.voxel_diagonal_mm == pytest.approx(13.0)


def test_label_volume_rejects_unknown_ids():
    data = np.zeros((4, 4, 4), dtype=np.uint8)
    data[1, 2, 3] = 9
    with pytest.raises(UnknownLabelError, match=r"9.*\(1, 2, 3\)"):
        LabelVolume(unit_geometry((4, 4, 4)), data)


def test_label_volume_rejects_float_data():
    with pytest.raises(UnknownLabelError, match="integral"):
        LabelVolume(unit_geometry((4, 4, 4)), np.zeros((4, 4, 4), dtype=np.float32))


def test_label_volume_is_immutable():
    vol = LabelVolume(unit_geometry((4, 4, 4)), np.zeros((4, 4, 4), dtype=np.uint8))
    with pytest.raises(ValueError, match="read-only"):
        vol.data[0, 0, 0] = 1


def test_label_mask_and_counts():
    data = np.zeros((4, 4, 4), dtype=np.uint8)
    data[0, 0, 0] = 1
    data[1:3, 1, 1] = 4
    vol = LabelVolume(unit_geometry((4, 4, 4)), data)
    assert vol.label_count(1) == 1
    assert vol.label_count(4) == 2
    assert vol.present_ids() == (0, 1, 4)
    with pytest.raises(UnknownLabelError):
        vol.label_mask(9)


def test_centroid_in_world_coordinates():
    data = np.zeros((5, 5, 5), dtype=np.uint8)
    data[2, 3, 4] = 2
    g = VolumeGeometry((5, 5, 5), (0.5, 0.5, 0.5), (10.0, 0.0, 0.0), np.eye(3))
    vol = LabelVolume(g, data)
    assert np.allclose(vol.centroid_mm(2), [11.0, 1.5, 2.0])
    with pytest.raises(EmptyLabelError):
        vol.centroid_mm(3)


def test_validate_labels_reports_count():
    data = np.zeros((3, 3, 3), dtype=np.int32)
    data[0, 0, 0] = 7
    data[2, 2, 2] = 7
    with pytest.raises(UnknownLabelError, match="2 voxels"):
        validate_labels(data, LabelVolume(unit_geometry((3, 3, 3)),
                                          np.zeros((3, 3, 3), dtype=np.uint8)).schema)


def test_scalar_volume_shape_check():
    with pytest.raises(ValueError, match="shape"):
        ScalarVolume(unit_geometry((4, 4, 4)), np.zeros((4, 4, 5)))


def test_displacement_field_validation():
    g = unit_geometry((4, 4, 4))
    with pytest.raises(ValueError, match="shape"):
        DisplacementField(g, np.zeros((4, 4, 4, 2)))
    vec = np.zeros((4, 4, 4, 3))
    vec[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        DisplacementField(g, vec)
    vec = np.zeros((4, 4, 4, 3))
    vec[1, 1, 1] = (3.0, 0.0, 4.0)
    assert DisplacementField(g, vec).max_norm_mm == pytest.approx(5.0)


def _series(n=3, tags=None):
    g = unit_geometry((4, 4, 4))
    frames = [
        LabelVolume(g, np.zeros((4, 4, 4), dtype=np.uint8)) for _ in range(n)
    ]
    tags = tags or [PhaseTag.DIASTOLE] * n
    return frames, tags


def test_series_requires_tag_per_frame():
    frames, _ = _series(3)
    with pytest.raises(ValueError, match="phase tag"):
        Series4D(tuple(frames), (PhaseTag.DIASTOLE,), {PhaseTag.DIASTOLE: 0})


def test_series_reference_must_match_phase():
    frames, _ = _series(2)
    tags = (PhaseTag.DIASTOLE, PhaseTag.SYSTOLE)
    with pytest.raises(ValueError, match="tagged"):
        Series4D(tuple(frames), tags, {PhaseTag.DIASTOLE: 1})
    with pytest.raises(ValueError, match="out of range"):
        Series4D(tuple(frames), tags, {PhaseTag.DIASTOLE: 5})


def test_series_frame_indices_and_split():
    frames, _ = _series(4)
    tags = (PhaseTag.DIASTOLE, PhaseTag.SYSTOLE, PhaseTag.DIASTOLE, PhaseTag.SYSTOLE)
    s = Series4D(tuple(frames), tags, {PhaseTag.SYSTOLE: 1})
    assert s.frame_indices(PhaseTag.DIASTOLE) == [0, 2]
    assert s.reference_index(PhaseTag.SYSTOLE) == 1
    with pytest.raises(ValueError, match="no diastole reference"):
        s.reference_index(PhaseTag.DIASTOLE)
    assert split_frames(s, PhaseTag.SYSTOLE) == [frames[1], frames[3]]


def test_series_rejects_mixed_geometry():
    g_a = unit_geometry((4, 4, 4))
    g_b = unit_geometry((4, 4, 5))
    frames = (
        LabelVolume(g_a, np.zeros((4, 4, 4), dtype=np.uint8)),
        LabelVolume(g_b, np.zeros((4, 4, 5), dtype=np.uint8)),
    )
    with pytest.raises(GeometryMismatchError):
        Series4D(frames, (PhaseTag.DIASTOLE,) * 2, {PhaseTag.DIASTOLE: 0})


def test_require_same_geometry_message():
    a = unit_geometry((4, 4, 4))
    b = unit_geometry((5, 4, 4))
    with pytest.raises(GeometryMismatchError, match="dims"):
        require_same_geometry(a, b)
    require_same_geometry(a, a)
