"""Pure NumPy/SciPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or disabled with
VALVE4D_PURE_PYTHON=1). Results match the native kernels bit-for-bit
for label operations and to float rounding for distances.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

IMPL = "python"


def nn_warp(labels: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample `labels` at fractional index coordinates, nearest neighbor.

    coords has shape labels-like + (3,); samples falling outside the grid
    produce background (0). Rounding is floor(x+0.5) on every axis so the
    native kernel agrees exactly at .5 boundaries.
    """
    idx = np.floor(coords.astype(np.float64) + 0.5).astype(np.int64)
    inb = np.ones(coords.shape[:-1], dtype=bool)
    for axis in range(3):
        inb &= (idx[..., axis] >= 0) & (idx[..., axis] < labels.shape[axis])
    out = np.zeros(coords.shape[:-1], dtype=labels.dtype)
    sel = idx[inb]
    out[inb] = labels[sel[:, 0], sel[:, 1], sel[:, 2]]
    return out


def majority_vote(stack: np.ndarray, n_ids: int) -> np.ndarray:
    """Per-position modal value of a (k, n) uint8 stack.

    Ties go to the smallest id; ids range over 0..n_ids-1.
    """
    counts = np.empty((n_ids, stack.shape[1]), dtype=np.int32)
    for lab in range(n_ids):
        counts[lab] = (stack == lab).sum(axis=0)
    # argmax returns the first maximum, i.e. the smallest id on ties
    return np.argmax(counts, axis=0).astype(np.uint8)


def _sq_seg(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    ap = p - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.zeros(len(a))
    ok = denom > 0
    t[ok] = np.einsum("ij,ij->i", ap[ok], ab[ok]) / denom[ok]
    np.clip(t, 0.0, 1.0, out=t)
    closest = a + t[:, None] * ab
    d = p - closest
    return np.einsum("ij,ij->i", d, d)


def _sq_point_tris(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Exact squared distance from one point to each triangle in (m,3,3).

    Minimum of the three edge-segment distances and, where the projection
    lands inside the face, the plane distance. Degenerate faces fall back
    to their edges.
    """
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    best = np.minimum(_sq_seg(p, a, b), _sq_seg(p, b, c))
    best = np.minimum(best, _sq_seg(p, c, a))

    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    wa = np.einsum("ij,ij->i", np.cross(b - p, c - p), n)
    wb = np.einsum("ij,ij->i", np.cross(c - p, a - p), n)
    wc = np.einsum("ij,ij->i", np.cross(a - p, b - p), n)
    inside = (wa >= 0) & (wb >= 0) & (wc >= 0) & (nn > 0)
    if np.any(inside):
        t = np.einsum("ij,ij->i", p - a[inside], n[inside])
        best[inside] = np.minimum(best[inside], t * t / nn[inside])
    return best


def min_distances_to_mesh(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Exact distance from each point to the nearest triangle of a soup.

    Pruned with a centroid kd-tree: the nearest-centroid distance is an
    upper bound (centroids lie on their triangles), so only triangles whose
    bounding sphere can beat it are checked. Exactness is preserved.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    n, m = len(points), len(tris)
    if n == 0:
        return np.zeros(0)
    if m == 0:
        raise ValueError("empty triangle soup")
    cent = tris.mean(axis=1)
    rad = np.sqrt(((tris - cent[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
    rmax = float(rad.max())
    tree = cKDTree(cent)
    upper = tree.query(points, k=1)[0]
    cand_lists = tree.query_ball_point(points, upper + rmax)
    out = np.empty(n)
    for i in range(n):
        cand = cand_lists[i]
        out[i] = np.sqrt(_sq_point_tris(points[i], tris[cand]).min())
    return out
