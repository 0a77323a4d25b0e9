# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: nearest-neighbor warp, majority vote, and exact
point-to-mesh distance with a uniform-grid index.

Mirrors _fallback.py; the label kernels agree bit-for-bit, the distance
kernel to float rounding.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt

cnp.import_array()

IMPL = "native"


def nn_warp(const cnp.uint8_t[:, :, ::1] labels, const cnp.float32_t[:, :, :, ::1] coords):
    cdef Py_ssize_t X = coords.shape[0], Y = coords.shape[1], Z = coords.shape[2]
    cdef Py_ssize_t LX = labels.shape[0], LY = labels.shape[1], LZ = labels.shape[2]
    out_arr = np.zeros((X, Y, Z), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef long ix, iy, iz
    for i in range(X):
        for j in range(Y):
            for k in range(Z):
                ix = <long>floor(<double>coords[i, j, k, 0] + 0.5)
                iy = <long>floor(<double>coords[i, j, k, 1] + 0.5)
                iz = <long>floor(<double>coords[i, j, k, 2] + 0.5)
                if 0 <= ix < LX and 0 <= iy < LY and 0 <= iz < LZ:
                    out[i, j, k] = labels[ix, iy, iz]
    return out_arr


def majority_vote(const cnp.uint8_t[:, ::1] stack, int n_ids):
    cdef Py_ssize_t k = stack.shape[0], n = stack.shape[1]
    cdef Py_ssize_t i, r
    cdef int counts[256]
    cdef int best, lab, v
    if n_ids > 256:
        raise ValueError("n_ids too large")
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] out = out_arr
    for lab in range(n_ids):
        counts[lab] = 0
    for i in range(n):
        for r in range(k):
            counts[stack[r, i]] += 1
        best = 0
        v = counts[0]
        for lab in range(1, n_ids):
            if counts[lab] > v:
                v = counts[lab]
                best = lab
        out[i] = <cnp.uint8_t>best
        for r in range(k):
            counts[stack[r, i]] = 0
    return out_arr


cdef inline double _sq_seg(double px, double py, double pz,
                           double ax, double ay, double az,
                           double bx, double by, double bz) nogil:
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double denom = abx * abx + aby * aby + abz * abz
    cdef double t = 0.0, dx, dy, dz
    if denom > 0.0:
        t = (apx * abx + apy * aby + apz * abz) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    dx = px - (ax + t * abx)
    dy = py - (ay + t * aby)
    dz = pz - (az + t * abz)
    return dx * dx + dy * dy + dz * dz


cdef inline double _sq_tri(double px, double py, double pz,
                           const double* t) nogil:
    # t: 9 doubles (ax ay az bx by bz cx cy cz)
    cdef double ax = t[0], ay = t[1], az = t[2]
    cdef double bx = t[3], by = t[4], bz = t[5]
    cdef double cx = t[6], cy = t[7], cz = t[8]
    cdef double best = _sq_seg(px, py, pz, ax, ay, az, bx, by, bz)
    cdef double d = _sq_seg(px, py, pz, bx, by, bz, cx, cy, cz)
    if d < best:
        best = d
    d = _sq_seg(px, py, pz, cx, cy, cz, ax, ay, az)
    if d < best:
        best = d

    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double nx = aby * acz - abz * acy
    cdef double ny = abz * acx - abx * acz
    cdef double nz = abx * acy - aby * acx
    cdef double nn = nx * nx + ny * ny + nz * nz
    if nn <= 0.0:
        return best
    cdef double pbx = bx - px, pby = by - py, pbz = bz - pz
    cdef double pcx = cx - px, pcy = cy - py, pcz = cz - pz
    cdef double pax = ax - px, pay = ay - py, paz = az - pz
    cdef double wa = (pby * pcz - pbz * pcy) * nx + (pbz * pcx - pbx * pcz) * ny \
        + (pbx * pcy - pby * pcx) * nz
    cdef double wb = (pcy * paz - pcz * pay) * nx + (pcz * pax - pcx * paz) * ny \
        + (pcx * pay - pcy * pax) * nz
    cdef double wc = (pay * pbz - paz * pby) * nx + (paz * pbx - pax * pbz) * ny \
        + (pax * pby - pay * pbx) * nz
    if wa >= 0.0 and wb >= 0.0 and wc >= 0.0:
        d = (px - ax) * nx + (py - ay) * ny + (pz - az) * nz
        d = d * d / nn
        if d < best:
            best = d
    return best


def min_distances_to_mesh(const double[:, ::1] points, const double[:, :, ::1] tris):
    """Exact nearest-triangle distance per point via a uniform grid.

    Triangles are binned into every grid cell their bounding box touches;
    queries expand Chebyshev rings around the (clamped) point cell and stop
    once the ring's lower bound exceeds the best distance found.
    """
    cdef Py_ssize_t n = points.shape[0], m = tris.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n == 0:
        return out_arr
    if m == 0:
        raise ValueError("empty triangle soup")

    # mesh bounding box and largest triangle extent
    cdef double lox = tris[0, 0, 0], loy = tris[0, 0, 1], loz = tris[0, 0, 2]
    cdef double hix = lox, hiy = loy, hiz = loz
    cdef double ext = 0.0, tlx, tly, tlz, thx, thy, thz, e
    cdef Py_ssize_t i, j
    for i in range(m):
        tlx = thx = tris[i, 0, 0]
        tly = thy = tris[i, 0, 1]
        tlz = thz = tris[i, 0, 2]
        for j in range(1, 3):
            if tris[i, j, 0] < tlx: tlx = tris[i, j, 0]
            if tris[i, j, 0] > thx: thx = tris[i, j, 0]
            if tris[i, j, 1] < tly: tly = tris[i, j, 1]
            if tris[i, j, 1] > thy: thy = tris[i, j, 1]
            if tris[i, j, 2] < tlz: tlz = tris[i, j, 2]
            if tris[i, j, 2] > thz: thz = tris[i, j, 2]
        if tlx < lox: lox = tlx
        if thx > hix: hix = thx
        if tly < loy: loy = tly
        if thy > hiy: hiy = thy
        if tlz < loz: loz = tlz
        if thz > hiz: hiz = thz
        e = thx - tlx
        if thy - tly > e: e = thy - tly
        if thz - tlz > e: e = thz - tlz
        if e > ext: ext = e

    cdef double span = hix - lox
    if hiy - loy > span: span = hiy - loy
    if hiz - loz > span: span = hiz - loz
    cdef double cs = ext
    if span / 96.0 > cs: cs = span / 96.0
    if cs <= 0.0: cs = 1.0
    cdef Py_ssize_t gx = <Py_ssize_t>((hix - lox) / cs) + 1
    cdef Py_ssize_t gy = <Py_ssize_t>((hiy - loy) / cs) + 1
    cdef Py_ssize_t gz = <Py_ssize_t>((hiz - loz) / cs) + 1
    cdef Py_ssize_t ncells = gx * gy * gz

    # CSR binning: count, prefix-sum, fill
    counts_arr = np.zeros(ncells + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] celloff = counts_arr
    cdef Py_ssize_t x0, x1, y0, y1, z0, z1, cx, cy, cz, cell
    cdef Py_ssize_t total = 0
    for i in range(m):
        x0, x1, y0, y1, z0, z1 = _tri_cells(tris, i, lox, loy, loz, cs, gx, gy, gz)
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                for cz in range(z0, z1 + 1):
                    celloff[(cx * gy + cy) * gz + cz + 1] += 1
                    total += 1
    for i in range(ncells):
        celloff[i + 1] += celloff[i]
    entries_arr = np.empty(total, dtype=np.int64)
    cdef cnp.int64_t[::1] entries = entries_arr
    fill_arr = np.zeros(ncells, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = fill_arr
    for i in range(m):
        x0, x1, y0, y1, z0, z1 = _tri_cells(tris, i, lox, loy, loz, cs, gx, gy, gz)
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                for cz in range(z0, z1 + 1):
                    cell = (cx * gy + cy) * gz + cz
                    entries[celloff[cell] + fill[cell]] = i
                    fill[cell] += 1

    stamp_arr = np.full(m, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] stamp = stamp_arr
    cdef double px, py, pz, qx, qy, qz, extra2, best, bound, d
    cdef Py_ssize_t pc_x, pc_y, pc_z, r, rmaxi, di, dj, dk, tri_idx, a0, a1
    cdef bint on_shell
    rmaxi = gx
    if gy > rmaxi: rmaxi = gy
    if gz > rmaxi: rmaxi = gz
    for i in range(n):
        px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
        # clamp to the mesh bbox; distances split as extra^2 + in-box part
        qx = px; qy = py; qz = pz
        if qx < lox: qx = lox
        elif qx > hix: qx = hix
        if qy < loy: qy = loy
        elif qy > hiy: qy = hiy
        if qz < loz: qz = loz
        elif qz > hiz: qz = hiz
        extra2 = (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)
        pc_x = <Py_ssize_t>((qx - lox) / cs)
        if pc_x >= gx: pc_x = gx - 1
        pc_y = <Py_ssize_t>((qy - loy) / cs)
        if pc_y >= gy: pc_y = gy - 1
        pc_z = <Py_ssize_t>((qz - loz) / cs)
        if pc_z >= gz: pc_z = gz - 1
        best = INFINITY
        for r in range(rmaxi + 1):
            if r > 0:
                bound = (r - 1) * cs
                if extra2 + bound * bound >= best:
                    break
            for di in range(-r, r + 1):
                cx = pc_x + di
                if cx < 0 or cx >= gx:
                    continue
                for dj in range(-r, r + 1):
                    cy = pc_y + dj
                    if cy < 0 or cy >= gy:
                        continue
                    on_shell = (di == -r or di == r or dj == -r or dj == r)
                    for dk in range(-r, r + 1):
                        if not (on_shell or dk == -r or dk == r):
                            continue
                        cz = pc_z + dk
                        if cz < 0 or cz >= gz:
                            continue
                        cell = (cx * gy + cy) * gz + cz
                        a0 = celloff[cell]; a1 = celloff[cell + 1]
                        for j in range(a0, a1):
                            tri_idx = entries[j]
                            if stamp[tri_idx] == i:
                                continue
                            stamp[tri_idx] = i
                            d = _sq_tri(px, py, pz, &tris[tri_idx, 0, 0])
                            if d < best:
                                best = d
        out[i] = sqrt(best)
    return out_arr


cdef inline (Py_ssize_t, Py_ssize_t, Py_ssize_t, Py_ssize_t, Py_ssize_t, Py_ssize_t) \
        _tri_cells(const double[:, :, ::1] tris, Py_ssize_t i,
                   double lox, double loy, double loz, double cs,
                   Py_ssize_t gx, Py_ssize_t gy, Py_ssize_t gz):
    cdef double tlx = tris[i, 0, 0], thx = tlx
    cdef double tly = tris[i, 0, 1], thy = tly
    cdef double tlz = tris[i, 0, 2], thz = tlz
    cdef Py_ssize_t j
    for j in range(1, 3):
        if tris[i, j, 0] < tlx: tlx = tris[i, j, 0]
        if tris[i, j, 0] > thx: thx = tris[i, j, 0]
        if tris[i, j, 1] < tly: tly = tris[i, j, 1]
        if tris[i, j, 1] > thy: thy = tris[i, j, 1]
        if tris[i, j, 2] < tlz: tlz = tris[i, j, 2]
        if tris[i, j, 2] > thz: thz = tris[i, j, 2]
    cdef Py_ssize_t x0 = <Py_ssize_t>((tlx - lox) / cs)
    cdef Py_ssize_t x1 = <Py_ssize_t>((thx - lox) / cs)
    cdef Py_ssize_t y0 = <Py_ssize_t>((tly - loy) / cs)
    cdef Py_ssize_t y1 = <Py_ssize_t>((thy - loy) / cs)
    cdef Py_ssize_t z0 = <Py_ssize_t>((tlz - loz) / cs)
    cdef Py_ssize_t z1 = <Py_ssize_t>((thz - loz) / cs)
    if x1 >= gx: x1 = gx - 1
    if y1 >= gy: y1 = gy - 1
    if z1 >= gz: z1 = gz - 1
    return x0, x1, y0, y1, z0, z1
