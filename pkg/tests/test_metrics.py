import numpy as np
import pytest

from valve4d import (
    BothEmptyWarning,
    GeometryMismatchError,
    LabelVolume,
    MetricRecord,
    OrientationResult,
    dice,
    evaluate_frame,
    majority_vote,
    outflow_orientation,
)
from valve4d.mesh import SurfaceMesh
from valve4d.metrics import symmetric_mesh_distance
from valve4d.schema import LVO, STJ

from conftest import unit_geometry
from oracles import all_pairs_mesh_distance, dice_counting, majority_vote_counting


def test_dice_matches_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.random((8, 8, 8)) < rng.uniform(0.05, 0.9)
        b = rng.random((8, 8, 8)) < rng.uniform(0.05, 0.9)
        assert dice(a, b) == pytest.approx(dice_counting(a, b), abs=1e-12)


def test_dice_edge_cases():
    a = np.zeros((4, 4, 4), dtype=bool)
    b = np.zeros((4, 4, 4), dtype=bool)
    with pytest.warns(BothEmptyWarning):
        assert dice(a, b) == 1.0
    b[0, 0, 0] = True
    assert dice(a, b) == 0.0
    assert dice(b, b) == 1.0


def _random_mesh(rng, n_verts, n_tris):
    verts = rng.normal(0, 10, size=(n_verts, 3))
    tris = rng.integers(0, n_verts, size=(n_tris, 3))
    return SurfaceMesh(verts, tris)


def test_mesh_distance_matches_all_pairs_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = _random_mesh(rng, 30, 50)
        b = _random_mesh(rng, 25, 45)
        mean, p95 = symmetric_mesh_distance(a, b)
        o_mean, o_p95 = all_pairs_mesh_distance(a, b)
        assert mean == pytest.approx(o_mean, abs=1e-9)
        assert p95 == pytest.approx(o_p95, abs=1e-9)


def _unit_square(z):
    verts = np.array(
        [[0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]], dtype=float
    )
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return SurfaceMesh(verts, tris)


def test_parallel_squares_analytic():
    mean, p95 = symmetric_mesh_distance(_unit_square(0.0), _unit_square(2.0))
    assert mean == pytest.approx(2.0, abs=1e-9)
    assert p95 == pytest.approx(2.0, abs=1e-9)


def test_mesh_distance_symmetry_and_self():
    rng = np.random.default_rng(2)
    a = _random_mesh(rng, 20, 30)
    b = _random_mesh(rng, 22, 35)
    assert symmetric_mesh_distance(a, b) == symmetric_mesh_distance(b, a)
    mean, p95 = symmetric_mesh_distance(a, a)
    assert mean == 0.0 and p95 == 0.0


def test_mesh_distance_rigid_motion_equivariance():
    """Translation-invariant; equivariant under a common rotation."""
    rng = np.random.default_rng(3)
    a = _random_mesh(rng, 20, 30)
    b = _random_mesh(rng, 18, 28)
    base = symmetric_mesh_distance(a, b)
    shift = np.array([5.0, -3.0, 2.0])
    a2 = SurfaceMesh(a.vertices + shift, a.triangles)
    b2 = SurfaceMesh(b.vertices + shift, b.triangles)
    moved = symmetric_mesh_distance(a2, b2)
    assert moved == pytest.approx(base, abs=1e-9)
    c, s = np.cos(0.7), np.sin(0.7)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    a3 = SurfaceMesh(a.vertices @ rot.T, a.triangles)
    b3 = SurfaceMesh(b.vertices @ rot.T, b.triangles)
    rotated = symmetric_mesh_distance(a3, b3)
    assert rotated == pytest.approx(base, abs=1e-9)


def _orientation_volume(lvo_at, stj_at):
    data = np.zeros((12, 12, 12), dtype=np.uint8)
    data[lvo_at] = LVO
    data[stj_at] = STJ
    return LabelVolume(unit_geometry((12, 12, 12)), data)


def test_outflow_orientation_angles():
    truth = _orientation_volume((6, 6, 1), (6, 6, 10))
    same = outflow_orientation(truth, truth)
    assert same.offset_angle_deg == pytest.approx(0.0, abs=1e-12)
    assert not same.flipped
    flipped = _orientation_volume((6, 6, 10), (6, 6, 1))
    res = outflow_orientation(flipped, truth)
    assert res.offset_angle_deg == pytest.approx(180.0, abs=1e-9)
    assert res.flipped
    ortho = _orientation_volume((1, 6, 6), (10, 6, 6))
    assert outflow_orientation(ortho, truth).offset_angle_deg == pytest.approx(90.0)


def test_orientation_result_validation():
    assert OrientationResult(90.0).flipped is False
    assert OrientationResult(90.0001).flipped is True
    with pytest.raises(ValueError, match="outside"):
        OrientationResult(181.0)


def test_majority_vote_matches_counting_oracle():
    rng = np.random.default_rng(4)
    g = unit_geometry((16, 16, 16))
    for _ in range(3):
        stacks = [rng.integers(0, 7, size=(16, 16, 16)).astype(np.uint8) for _ in range(5)]
        vols = [LabelVolume(g, s) for s in stacks]
        fused = majority_vote(vols)
        assert np.array_equal(fused.data, majority_vote_counting(stacks))


def test_majority_vote_tie_breaks_to_smallest_id():
    g = unit_geometry((1, 1, 2))
    mk = lambda *v: LabelVolume(g, np.array(v, dtype=np.uint8).reshape(1, 1, 2))
    fused = majority_vote([mk(3, 6), mk(3, 5), mk(1, 6), mk(1, 5), mk(0, 2)])
    # voxel 0: two 3s, two 1s, one 0 -> 1; voxel 1: two 6s, two 5s, one 2 -> 5
    assert fused.data[0, 0, 0] == 1
    assert fused.data[0, 0, 1] == 5


def test_majority_vote_validation():
    g = unit_geometry((2, 2, 2))
    vol = LabelVolume(g, np.zeros((2, 2, 2), dtype=np.uint8))
    with pytest.raises(ValueError, match="at least 2"):
        majority_vote([vol])
    other = LabelVolume(unit_geometry((2, 2, 3)), np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(GeometryMismatchError):
        majority_vote([vol, other])


def test_evaluate_frame_perfect_prediction(closed_frame):
    records, orient = evaluate_frame(closed_frame, closed_frame, scan_id="S", frame_index=2)
    assert {r.label_id for r in records} == {1, 2, 3, 4}
    for r in records:
        assert r.scan_id == "S" and r.frame_index == 2
        assert r.dice == 1.0
        assert r.mean_sym_dist == 0.0 and r.p95_sym_dist == 0.0
    assert orient.offset_angle_deg == pytest.approx(0.0, abs=1e-12)


def test_metric_record_validation():
    with pytest.raises(ValueError, match="dice"):
        MetricRecord("s", 0, 1, dice=1.5, mean_sym_dist=0, p95_sym_dist=0)
    with pytest.raises(ValueError, match="nonnegative"):
        MetricRecord("s", 0, 1, dice=0.5, mean_sym_dist=-1.0, p95_sym_dist=0)
    # heavy-tailed distributions legitimately put the mean above the
    # nearest-rank p95; the record must accept that
    MetricRecord("s", 0, 1, dice=0.5, mean_sym_dist=2.0, p95_sym_dist=0.5)
