"""Native vs fallback kernel parity.

Label kernels must agree bit-for-bit, the distance kernel to float
rounding. The import-time dispatch is covered by a subprocess test.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from valve4d._kernels import IMPL, _fallback

_native = pytest.importorskip(
    "valve4d._kernels._native", reason="compiled extension not built"
)


def test_nn_warp_parity():
    rng = np.random.default_rng(0)
    dims = (17, 13, 11)
    labels = rng.integers(0, 7, size=dims).astype(np.uint8)
    base = np.stack(
        np.meshgrid(*[np.arange(d, dtype=np.float32) for d in dims], indexing="ij"),
        axis=-1,
    )
    coords = np.ascontiguousarray(
        base + rng.normal(0, 3, size=dims + (3,)).astype(np.float32)
    )
    a = _fallback.nn_warp(labels, coords)
    b = _native.nn_warp(labels, coords)
    assert np.array_equal(a, b)


def test_nn_warp_half_voxel_rounding():
    """Rounding at exact .5 must agree (floor(x + 0.5) in both)."""
    labels = np.arange(8, dtype=np.uint8).reshape(2, 2, 2) % 7
    coords = np.full((2, 2, 2, 3), 0.5, dtype=np.float32)
    a = _fallback.nn_warp(labels, coords)
    b = _native.nn_warp(labels, coords)
    assert np.array_equal(a, b)
    assert a[0, 0, 0] == labels[1, 1, 1]


def test_nn_warp_out_of_bounds_is_background():
    labels = np.full((3, 3, 3), 5, dtype=np.uint8)
    coords = np.full((3, 3, 3, 3), 10.0, dtype=np.float32)
    coords[0, 0, 0] = (-1.0, 0.0, 0.0)
    for impl in (_fallback, _native):
        out = impl.nn_warp(labels, np.ascontiguousarray(coords))
        assert out.max() == 0


def test_majority_vote_parity_and_ties():
    rng = np.random.default_rng(1)
    stack = np.ascontiguousarray(rng.integers(0, 7, size=(5, 4096)).astype(np.uint8))
    a = _fallback.majority_vote(stack, 7)
    b = _native.majority_vote(stack, 7)
    assert np.array_equal(a, b)
    # forced two-way ties: labels 2 and 4 twice each, 6 once
    tie = np.ascontiguousarray(
        np.array([[2], [2], [4], [4], [6]], dtype=np.uint8)
    )
    assert _fallback.majority_vote(tie, 7)[0] == 2
    assert _native.majority_vote(tie, 7)[0] == 2


def test_min_distances_parity():
    rng = np.random.default_rng(2)
    pts = rng.normal(0, 10, size=(500, 3))
    verts = rng.normal(0, 10, size=(80, 3))
    tris = np.ascontiguousarray(verts[rng.integers(0, 80, size=(150, 3))])
    a = _fallback.min_distances_to_mesh(pts, tris)
    b = _native.min_distances_to_mesh(pts, tris)
    assert np.allclose(a, b, atol=1e-9, rtol=0)


def test_min_distances_empty_inputs():
    tris = np.zeros((1, 3, 3))
    tris[0, 1, 0] = 1.0
    tris[0, 2, 1] = 1.0
    for impl in (_fallback, _native):
        assert impl.min_distances_to_mesh(np.zeros((0, 3)), tris).shape == (0,)
        with pytest.raises(ValueError, match="empty triangle soup"):
            impl.min_distances_to_mesh(np.zeros((1, 3)), np.zeros((0, 3, 3)))


def test_native_is_active_by_default():
    assert IMPL == "native"


def test_env_var_forces_fallback():
    code = "import valve4d._kernels as k; print(k.IMPL)"
    env = dict(os.environ, VALVE4D_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "python"
