import numpy as np
import pytest

from valve4d import EmptyLabelError, LabelVolume
from valve4d.mesh import (
    SurfaceMesh,
    extract_surface,
    is_watertight,
    mesh_area,
    mesh_volume,
    save_obj,
)
from valve4d.volume import VolumeGeometry

from conftest import unit_geometry


def _single_voxel(spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    g = VolumeGeometry((5, 5, 5), spacing, origin, np.eye(3))
    data = np.zeros((5, 5, 5), dtype=np.uint8)
    data[2, 2, 2] = 1
    return LabelVolume(g, data)


def test_surface_mesh_validation():
    with pytest.raises(ValueError, match="vertices"):
        SurfaceMesh(np.zeros((3, 2)), np.zeros((1, 3), dtype=int))
    with pytest.raises(ValueError, match="out of range"):
        SurfaceMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
    with pytest.raises(ValueError, match="non-finite"):
        SurfaceMesh(np.full((3, 3), np.nan), np.array([[0, 1, 2]]))


def test_single_voxel_mesh_closes_and_measures():
    mesh = extract_surface(_single_voxel(), 1)
    assert mesh.n_triangles > 0
    assert is_watertight(mesh)
    # supersampled marching cubes stays within a few percent of the cube
    assert mesh_volume(mesh) == pytest.approx(1.0, rel=0.1)
    assert mesh_area(mesh) == pytest.approx(6.0, rel=0.15)


def test_box_volume_and_area():
    g = unit_geometry((12, 12, 12), spacing=(0.5, 0.5, 0.5))
    data = np.zeros((12, 12, 12), dtype=np.uint8)
    data[2:10, 2:10, 2:10] = 4  # 4mm cube
    mesh = extract_surface(LabelVolume(g, data), 4)
    assert is_watertight(mesh)
    assert mesh_volume(mesh) == pytest.approx(64.0, rel=0.05)
    assert mesh_area(mesh) == pytest.approx(96.0, rel=0.08)


def test_vertices_track_world_geometry():
    near = extract_surface(_single_voxel(), 1)
    far = extract_surface(_single_voxel(origin=(10.0, -5.0, 2.0)), 1)
    assert np.allclose(far.vertices - near.vertices, [10.0, -5.0, 2.0])
    fine = extract_surface(_single_voxel(spacing=(0.5, 0.5, 0.5)), 1)
    assert mesh_volume(fine) == pytest.approx(0.125, rel=0.1)


def test_anisotropic_spacing_scales_mesh():
    mesh = extract_surface(_single_voxel(spacing=(1.0, 1.0, 3.0)), 1)
    assert mesh_volume(mesh) == pytest.approx(3.0, rel=0.1)


def test_supersample_changes_resolution():
    coarse = extract_surface(_single_voxel(), 1, supersample=1)
    fine = extract_surface(_single_voxel(), 1, supersample=5)
    assert fine.n_triangles > coarse.n_triangles
    # at native resolution a lone voxel collapses to an octahedron
    assert mesh_volume(coarse) == pytest.approx(1.0 / 6.0, rel=1e-6)


def test_empty_label_raises():
    with pytest.raises(EmptyLabelError):
        extract_surface(_single_voxel(), 3)


def test_open_mesh_detected():
    open_tri = SurfaceMesh(np.eye(3), np.array([[0, 1, 2]]))
    assert not is_watertight(open_tri)


def test_save_obj_round_trip(tmp_path):
    mesh = extract_surface(_single_voxel(), 1)
    path = tmp_path / "m.obj"
    save_obj(mesh, path)
    lines = path.read_text().splitlines()
    v_lines = [l for l in lines if l.startswith("v ")]
    f_lines = [l for l in lines if l.startswith("f ")]
    assert len(v_lines) == mesh.n_vertices
    assert len(f_lines) == mesh.n_triangles
    first = np.array([float(x) for x in v_lines[0].split()[1:]])
    assert np.allclose(first, mesh.vertices[0], atol=1e-6)
