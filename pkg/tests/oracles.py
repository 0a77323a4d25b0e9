"""Independent reference implementations used to cross-check the package.

Each oracle deliberately takes a different computational route from the
shipped code: Dice by integer voxel counting, point-to-triangle distance
by Eberly's region classification (the package clamps edges), ANOVA by
raw-sum computational formulas (the package centers), percentiles by
explicit sorting.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


def dice_counting(a: np.ndarray, b: np.ndarray) -> float:
    """Dice from explicit integer voxel counts."""
    inter = int(np.count_nonzero(np.logical_and(a, b)))
    na = int(np.count_nonzero(a))
    nb = int(np.count_nonzero(b))
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def _sq_point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.zeros(len(a))
    ok = denom > 0
    t[ok] = np.einsum("ij,ij->i", (p - a)[ok], ab[ok]) / denom[ok]
    np.clip(t, 0.0, 1.0, out=t)
    d = p - (a + t[:, None] * ab)
    return np.einsum("ij,ij->i", d, d)


def sq_point_triangles_eberly(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Squared distance from one point to each triangle, Eberly regions.

    Solves the constrained quadratic min |a + s e0 + t e1 - p|^2 over the
    barycentric simplex by classifying the unconstrained minimizer into
    the seven Voronoi-like regions and clamping in closed form.
    Degenerate (zero-area) faces fall back to their edge segments.
    """
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    e0 = b - a
    e1 = c - a
    d = a - p
    a00 = np.einsum("ij,ij->i", e0, e0)
    a01 = np.einsum("ij,ij->i", e0, e1)
    a11 = np.einsum("ij,ij->i", e1, e1)
    b0 = np.einsum("ij,ij->i", e0, d)
    b1 = np.einsum("ij,ij->i", e1, d)
    det = a00 * a11 - a01 * a01

    s = np.empty(len(tris))
    t = np.empty(len(tris))
    degen = det <= 0.0
    safe_det = np.where(degen, 1.0, det)
    safe_a00 = np.where(a00 > 0, a00, 1.0)
    safe_a11 = np.where(a11 > 0, a11, 1.0)
    denom_q = a00 - 2.0 * a01 + a11
    safe_q = np.where(denom_q > 0, denom_q, 1.0)

    def clamp01(x):
        return np.clip(x, 0.0, 1.0)

    su = a01 * b1 - a11 * b0
    tu = a01 * b0 - a00 * b1

    inside = su + tu <= det
    # region 0: interior
    r0 = inside & (su >= 0) & (tu >= 0)
    s[r0] = su[r0] / safe_det[r0]
    t[r0] = tu[r0] / safe_det[r0]
    # region 4: both negative corner at a
    r4 = inside & (su < 0) & (tu < 0)
    r4a = r4 & (b0 < 0)
    s[r4a] = clamp01(-b0 / safe_a00)[r4a]
    t[r4a] = 0.0
    r4b = r4 & (b0 >= 0)
    s[r4b] = 0.0
    t[r4b] = clamp01(-b1 / safe_a11)[r4b]
    # region 3: edge s = 0
    r3 = inside & (su < 0) & (tu >= 0)
    s[r3] = 0.0
    t[r3] = clamp01(-b1 / safe_a11)[r3]
    # region 5: edge t = 0
    r5 = inside & (su >= 0) & (tu < 0)
    s[r5] = clamp01(-b0 / safe_a00)[r5]
    t[r5] = 0.0

    outside = ~inside
    # region 2: corner at c or edge s = 0 / hypotenuse
    r2 = outside & (su < 0)
    tmp0 = a01 + b0
    tmp1 = a11 + b1
    r2a = r2 & (tmp1 > tmp0)
    s[r2a] = clamp01((tmp1 - tmp0) / safe_q)[r2a]
    t[r2a] = 1.0 - s[r2a]
    r2b = r2 & (tmp1 <= tmp0)
    s[r2b] = 0.0
    t[r2b] = clamp01(-b1 / safe_a11)[r2b]
    # region 6: corner at b or edge t = 0 / hypotenuse
    r6 = outside & (su >= 0) & (tu < 0)
    tmp0b = a01 + b1
    tmp1b = a00 + b0
    r6a = r6 & (tmp1b > tmp0b)
    t[r6a] = clamp01((tmp1b - tmp0b) / safe_q)[r6a]
    s[r6a] = 1.0 - t[r6a]
    r6b = r6 & (tmp1b <= tmp0b)
    t[r6b] = 0.0
    s[r6b] = clamp01(-b0 / safe_a00)[r6b]
    # region 1: hypotenuse
    r1 = outside & (su >= 0) & (tu >= 0)
    numer = (a11 + b1) - (a01 + b0)
    s[r1] = clamp01(numer / safe_q)[r1]
    t[r1] = 1.0 - s[r1]

    closest = a + s[:, None] * e0 + t[:, None] * e1
    diff = closest - p
    out = np.einsum("ij,ij->i", diff, diff)
    if np.any(degen):
        dd = np.minimum(
            _sq_point_segment(p, a[degen], b[degen]),
            _sq_point_segment(p, b[degen], c[degen]),
        )
        out[degen] = np.minimum(dd, _sq_point_segment(p, c[degen], a[degen]))
    return out


def all_pairs_mesh_distance(mesh_a, mesh_b) -> tuple[float, float]:
    """Pooled mean and nearest-rank p95 via all-pairs Eberly distances."""
    pooled = []
    for src, dst in ((mesh_a, mesh_b), (mesh_b, mesh_a)):
        tris = dst.triangle_corners()
        for p in src.vertices:
            pooled.append(math.sqrt(sq_point_triangles_eberly(p, tris).min()))
    pooled.sort()
    n = len(pooled)
    rank = math.ceil(0.95 * n)
    return sum(pooled) / n, pooled[rank - 1]


def majority_vote_counting(stacks: list[np.ndarray]) -> np.ndarray:
    """Per-voxel modal label via Counter; smallest id wins ties."""
    flat = [s.reshape(-1) for s in stacks]
    out = np.empty(flat[0].shape, dtype=np.uint8)
    for i in range(flat[0].size):
        votes = Counter(int(s[i]) for s in flat)
        top = max(votes.values())
        out[i] = min(lab for lab, cnt in votes.items() if cnt == top)
    return out.reshape(stacks[0].shape)


def anova_mean_squares_raw(x: np.ndarray) -> tuple[float, float, float]:
    """Two-way ANOVA mean squares via raw-sum computational formulas."""
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    total = x.sum()
    correction = total * total / (n * k)
    ss_total = float((x * x).sum() - correction)
    ss_rows = float((x.sum(axis=1) ** 2).sum() / k - correction)
    ss_cols = float((x.sum(axis=0) ** 2).sum() / n - correction)
    ss_err = ss_total - ss_rows - ss_cols
    return (
        ss_rows / (n - 1),
        ss_cols / (k - 1),
        ss_err / ((n - 1) * (k - 1)),
    )


def icc_from_anova(x: np.ndarray, model: str) -> float:
    ms_rows, ms_cols, ms_err = anova_mean_squares_raw(x)
    n, k = np.asarray(x).shape
    if model == "icc3":
        return (ms_rows - ms_err) / (ms_rows + (k - 1) * ms_err)
    return (ms_rows - ms_err) / (
        ms_rows + (k - 1) * ms_err + k * (ms_cols - ms_err) / n
    )
