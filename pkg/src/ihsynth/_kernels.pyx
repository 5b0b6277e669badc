# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled geometry kernels: point-to-mesh signed distance and lazy trilinear
queries of the modified SDF.  Semantics match ``ihsynth._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, floor, isnan, M_PI

cnp.import_array()


cdef inline double _closest_sq(double px, double py, double pz,
                               const double[:, :, ::1] tris, Py_ssize_t t) noexcept nogil:
    # Ericson, Real-Time Collision Detection, 5.1.5
    cdef double ax = tris[t, 0, 0], ay = tris[t, 0, 1], az = tris[t, 0, 2]
    cdef double bx = tris[t, 1, 0], by = tris[t, 1, 1], bz = tris[t, 1, 2]
    cdef double cx = tris[t, 2, 0], cy = tris[t, 2, 1], cz = tris[t, 2, 2]
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double qx, qy, qz, v, w, denom
    if d1 <= 0.0 and d2 <= 0.0:
        qx = ax; qy = ay; qz = az
        return (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)
    cdef double bpx = px - bx, bpy = py - by, bpz = pz - bz
    cdef double d3 = abx * bpx + aby * bpy + abz * bpz
    cdef double d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    cdef double vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx = ax + v * abx; qy = ay + v * aby; qz = az + v * abz
        return (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)
    cdef double cpx = px - cx, cpy = py - cy, cpz = pz - cz
    cdef double d5 = abx * cpx + aby * cpy + abz * cpz
    cdef double d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    cdef double vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx = ax + w * acx; qy = ay + w * acy; qz = az + w * acz
        return (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)
    cdef double va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + w * (cx - bx); qy = by + w * (cy - by); qz = bz + w * (cz - bz)
        return (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = ax + abx * v + acx * w
    qy = ay + aby * v + acy * w
    qz = az + abz * v + acz * w
    return (px - qx) * (px - qx) + (py - qy) * (py - qy) + (pz - qz) * (pz - qz)


cdef inline double _solid_angle(double px, double py, double pz,
                                const double[:, :, ::1] tris, Py_ssize_t t) noexcept nogil:
    # Van Oosterom & Strackee; positive for a counter-clockwise triangle seen from outside
    cdef double ax = tris[t, 0, 0] - px, ay = tris[t, 0, 1] - py, az = tris[t, 0, 2] - pz
    cdef double bx = tris[t, 1, 0] - px, by = tris[t, 1, 1] - py, bz = tris[t, 1, 2] - pz
    cdef double cx = tris[t, 2, 0] - px, cy = tris[t, 2, 1] - py, cz = tris[t, 2, 2] - pz
    cdef double la = sqrt(ax * ax + ay * ay + az * az)
    cdef double lb = sqrt(bx * bx + by * by + bz * bz)
    cdef double lc = sqrt(cx * cx + cy * cy + cz * cz)
    cdef double det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
    cdef double div = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                       + (ax * cx + ay * cy + az * cz) * lb
                       + (bx * cx + by * cy + bz * cz) * la)
    return 2.0 * atan2(det, div)


cdef inline double _signed(double px, double py, double pz,
                           const double[:, :, ::1] tris) noexcept nogil:
    cdef Py_ssize_t t, nt = tris.shape[0]
    cdef double best = 1e300, d, wsum = 0.0
    for t in range(nt):
        d = _closest_sq(px, py, pz, tris, t)
        if d < best:
            best = d
        wsum += _solid_angle(px, py, pz, tris, t)
    best = sqrt(best)
    if wsum > 2.0 * M_PI or wsum < -2.0 * M_PI:
        return -best
    return best


def signed_distance(points, tris):
    """Signed distance of each point to a closed triangle mesh (negative inside)."""
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, :, ::1] tv = np.ascontiguousarray(tris, dtype=np.float64)
    cdef Py_ssize_t i, n = p.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _signed(p[i, 0], p[i, 1], p[i, 2], tv)
    return out


def unsigned_distance(points, tris):
    """Distance of each point to the nearest triangle."""
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, :, ::1] tv = np.ascontiguousarray(tris, dtype=np.float64)
    cdef Py_ssize_t i, t, n = p.shape[0], nt = tv.shape[0]
    cdef double best, d
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            best = 1e300
            for t in range(nt):
                d = _closest_sq(p[i, 0], p[i, 1], p[i, 2], tv, t)
                if d < best:
                    best = d
            o[i] = sqrt(best)
    return out


cdef inline double _node(double[:, :, ::1] vals, Py_ssize_t i, Py_ssize_t j, Py_ssize_t k,
                         double ox, double oy, double oz, double h,
                         const double[:, :, ::1] tris, const double* box) noexcept nogil:
    cdef double v = vals[i, j, k]
    cdef double s, x, y, z
    if isnan(v):
        x = ox + i * h
        y = oy + j * h
        z = oz + k * h
        if x < box[0] or y < box[1] or z < box[2] or x > box[3] or y > box[4] or z > box[5]:
            v = 0.0   # outside the bounding box, hence outside the mesh
        else:
            s = _signed(x, y, z, tris)
            v = -s if s < 0.0 else 0.0
        vals[i, j, k] = v
    return v


cdef void _bounds(const double[:, :, ::1] tv, double* box) noexcept nogil:
    cdef Py_ssize_t t, c, a
    for a in range(3):
        box[a] = 1e300
        box[3 + a] = -1e300
    for t in range(tv.shape[0]):
        for c in range(3):
            for a in range(3):
                if tv[t, c, a] < box[a]:
                    box[a] = tv[t, c, a]
                if tv[t, c, a] > box[3 + a]:
                    box[3 + a] = tv[t, c, a]


cdef inline double _interp(double[:, :, ::1] vals, double ox, double oy, double oz, double h,
                          double fx, double fy, double fz, const double[:, :, ::1] tv,
                          const double* box, double* g) noexcept nogil:
    # fx, fy, fz in lattice units and inside [0, N-1]; writes the gradient to g
    cdef Py_ssize_t nn = vals.shape[0]
    cdef Py_ssize_t i = <Py_ssize_t>floor(fx), j = <Py_ssize_t>floor(fy), k = <Py_ssize_t>floor(fz)
    cdef double inv = 1.0 / h
    if i > nn - 2:
        i = nn - 2
    if j > nn - 2:
        j = nn - 2
    if k > nn - 2:
        k = nn - 2
    cdef double tx = fx - i, ty = fy - j, tz = fz - k
    cdef double c000 = _node(vals, i, j, k, ox, oy, oz, h, tv, box)
    cdef double c100 = _node(vals, i + 1, j, k, ox, oy, oz, h, tv, box)
    cdef double c010 = _node(vals, i, j + 1, k, ox, oy, oz, h, tv, box)
    cdef double c110 = _node(vals, i + 1, j + 1, k, ox, oy, oz, h, tv, box)
    cdef double c001 = _node(vals, i, j, k + 1, ox, oy, oz, h, tv, box)
    cdef double c101 = _node(vals, i + 1, j, k + 1, ox, oy, oz, h, tv, box)
    cdef double c011 = _node(vals, i, j + 1, k + 1, ox, oy, oz, h, tv, box)
    cdef double c111 = _node(vals, i + 1, j + 1, k + 1, ox, oy, oz, h, tv, box)
    cdef double c00 = c000 * (1 - tx) + c100 * tx
    cdef double c10 = c010 * (1 - tx) + c110 * tx
    cdef double c01 = c001 * (1 - tx) + c101 * tx
    cdef double c11 = c011 * (1 - tx) + c111 * tx
    cdef double c0 = c00 * (1 - ty) + c10 * ty
    cdef double c1 = c01 * (1 - ty) + c11 * ty
    g[0] = inv * ((1 - ty) * (1 - tz) * (c100 - c000) + ty * (1 - tz) * (c110 - c010)
                  + (1 - ty) * tz * (c101 - c001) + ty * tz * (c111 - c011))
    g[1] = inv * ((1 - tx) * (1 - tz) * (c010 - c000) + tx * (1 - tz) * (c110 - c100)
                  + (1 - tx) * tz * (c011 - c001) + tx * tz * (c111 - c101))
    g[2] = inv * (c1 - c0)
    return c0 * (1 - tz) + c1 * tz


def grid_query(values, origin, double spacing, points, tris):
    """Trilinear value and gradient of a lazily filled Omega grid.

    ``values`` is an (N, N, N) float64 array; NaN entries are computed on
    demand from ``tris`` and written back.  Points outside the node lattice
    return zero value and gradient.
    """
    cdef double[:, :, ::1] vals = values
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, :, ::1] tv = np.ascontiguousarray(tris, dtype=np.float64)
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef Py_ssize_t n = p.shape[0], m
    cdef double top = <double>(vals.shape[0] - 1)
    out_v = np.zeros(n, dtype=np.float64)
    out_g = np.zeros((n, 3), dtype=np.float64)
    cdef double[::1] ov = out_v
    cdef double[:, ::1] og = out_g
    cdef double fx, fy, fz, inv = 1.0 / spacing
    cdef double g[3]
    cdef double box[6]
    with nogil:
        _bounds(tv, box)
        for m in range(n):
            fx = (p[m, 0] - ox) * inv
            fy = (p[m, 1] - oy) * inv
            fz = (p[m, 2] - oz) * inv
            if fx < 0.0 or fy < 0.0 or fz < 0.0 or fx > top or fy > top or fz > top:
                continue
            ov[m] = _interp(vals, ox, oy, oz, spacing, fx, fy, fz, tv, box, g)
            og[m, 0] = g[0]
            og[m, 1] = g[1]
            og[m, 2] = g[2]
    return out_v, out_g


def rigid_grid_query(values, origin, double spacing, frame, points, tris, grad_points):
    """Sum of Omega over world ``points`` for a grid riding on the rigid ``frame``.

    The grid lives in the frame's local coordinates.  The world-space point
    gradient is added into ``grad_points`` (n, 3) in place.  Returns the sum
    and its gradient w.r.t. the top three rows of ``frame`` (3, 4).
    """
    cdef double[:, :, ::1] vals = values
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, :, ::1] tv = np.ascontiguousarray(tris, dtype=np.float64)
    cdef const double[:, ::1] fr = np.ascontiguousarray(frame, dtype=np.float64)
    cdef double[:, ::1] gp = grad_points
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef Py_ssize_t n = p.shape[0], m, a
    cdef double top = <double>(vals.shape[0] - 1), inv = 1.0 / spacing
    out_f = np.zeros((3, 4), dtype=np.float64)
    cdef double[:, ::1] gf = out_f
    cdef double dx, dy, dz, lx, ly, lz, wx, wy, wz, total = 0.0
    cdef double g[3]
    cdef double box[6]
    with nogil:
        _bounds(tv, box)
        for m in range(n):
            dx = p[m, 0] - fr[0, 3]
            dy = p[m, 1] - fr[1, 3]
            dz = p[m, 2] - fr[2, 3]
            lx = (fr[0, 0] * dx + fr[1, 0] * dy + fr[2, 0] * dz - ox) * inv
            if lx < 0.0 or lx > top:
                continue
            ly = (fr[0, 1] * dx + fr[1, 1] * dy + fr[2, 1] * dz - oy) * inv
            if ly < 0.0 or ly > top:
                continue
            lz = (fr[0, 2] * dx + fr[1, 2] * dy + fr[2, 2] * dz - oz) * inv
            if lz < 0.0 or lz > top:
                continue
            total += _interp(vals, ox, oy, oz, spacing, lx, ly, lz, tv, box, g)
            for a in range(3):
                gp[m, a] += fr[a, 0] * g[0] + fr[a, 1] * g[1] + fr[a, 2] * g[2]
                gf[a, 3] -= fr[a, 0] * g[0] + fr[a, 1] * g[1] + fr[a, 2] * g[2]
            wx = dx
            wy = dy
            wz = dz
            for a in range(3):
                gf[0, a] += wx * g[a]
                gf[1, a] += wy * g[a]
                gf[2, a] += wz * g[a]
    return total, out_f
