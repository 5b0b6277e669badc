"""Pure numpy versions of the geometry kernels in ``_kernels.pyx``."""

import numpy as np

_CHUNK = 4096


def _closest_sq(p, a, b, c):
    """Squared distance from points ``p`` (M,1,3) to triangles (1,T,3) each."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("...k,...k->...", ab, ap)
    d2 = np.einsum("...k,...k->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...k,...k->...", ab, bp)
    d4 = np.einsum("...k,...k->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...k,...k->...", ab, cp)
    d6 = np.einsum("...k,...k->...", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    shape = np.broadcast(d1, d1).shape
    q = np.empty(shape + (3,))
    done = np.zeros(shape, dtype=bool)

    def assign(mask, value):
        nonlocal done
        mask = mask & ~done
        q[mask] = np.broadcast_to(value, shape + (3,))[mask]
        done = done | mask

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), a)
        assign((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[..., None] * ab)
        assign((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[..., None] * ac)
        w2 = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w2[..., None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        assign(np.ones(shape, dtype=bool),
               a + ab * (vb * denom)[..., None] + ac * (vc * denom)[..., None])
    diff = p - q
    return np.einsum("...k,...k->...", diff, diff)


def _winding(p, a, b, c):
    ra, rb, rc = a - p, b - p, c - p
    la = np.linalg.norm(ra, axis=-1)
    lb = np.linalg.norm(rb, axis=-1)
    lc = np.linalg.norm(rc, axis=-1)
    det = np.einsum("...k,...k->...", ra, np.cross(rb, rc))
    div = (la * lb * lc + np.einsum("...k,...k->...", ra, rb) * lc
           + np.einsum("...k,...k->...", ra, rc) * lb
           + np.einsum("...k,...k->...", rb, rc) * la)
    return (2.0 * np.arctan2(det, div)).sum(axis=-1)


def _chunks(points):
    for start in range(0, len(points), _CHUNK):
        yield start, points[start:start + _CHUNK]


def signed_distance(points, tris):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(tris, dtype=np.float64)
    a, b, c = tris[None, :, 0], tris[None, :, 1], tris[None, :, 2]
    out = np.empty(len(points))
    for start, chunk in _chunks(points):
        p = chunk[:, None, :]
        dist = np.sqrt(_closest_sq(p, a, b, c).min(axis=1))
        inside = np.abs(_winding(p, a, b, c)) > 2.0 * np.pi
        out[start:start + len(chunk)] = np.where(inside, -dist, dist)
    return out


def unsigned_distance(points, tris):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(tris, dtype=np.float64)
    a, b, c = tris[None, :, 0], tris[None, :, 1], tris[None, :, 2]
    out = np.empty(len(points))
    for start, chunk in _chunks(points):
        out[start:start + len(chunk)] = np.sqrt(_closest_sq(chunk[:, None, :], a, b, c).min(axis=1))
    return out


_CORNERS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def grid_query(values, origin, spacing, points, tris):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    origin = np.asarray(origin, dtype=np.float64)
    n = values.shape[0]
    out_v = np.zeros(len(points))
    out_g = np.zeros((len(points), 3))
    f = (points - origin) / spacing
    ok = np.all((f >= 0.0) & (f <= n - 1), axis=1)
    if not ok.any():
        return out_v, out_g
    f = f[ok]
    base = np.minimum(np.floor(f).astype(np.int64), n - 2)
    t = f - base
    idx = base[:, None, :] + _CORNERS[None, :, :]
    flat = np.ravel_multi_index((idx[..., 0], idx[..., 1], idx[..., 2]), values.shape)
    store = values.reshape(-1)
    missing = np.unique(flat[np.isnan(store[flat])])
    if missing.size:
        ijk = np.stack(np.unravel_index(missing, values.shape), axis=1)
        sdf = signed_distance(origin + ijk * spacing, tris)
        store[missing] = np.where(sdf < 0.0, -sdf, 0.0)
    c = store[flat].reshape(-1, 2, 2, 2)
    tx, ty, tz = t[:, 0, None, None], t[:, 1, None], t[:, 2]
    cx = c[:, 0] * (1 - tx) + c[:, 1] * tx
    cxy = cx[:, 0] * (1 - ty) + cx[:, 1] * ty
    out_v[ok] = cxy[:, 0] * (1 - tz) + cxy[:, 1] * tz
    dx = c[:, 1] - c[:, 0]
    dxy = dx[:, 0] * (1 - ty) + dx[:, 1] * ty
    gx = dxy[:, 0] * (1 - tz) + dxy[:, 1] * tz
    dy = cx[:, 1] - cx[:, 0]
    gy = dy[:, 0] * (1 - tz) + dy[:, 1] * tz
    gz = cxy[:, 1] - cxy[:, 0]
    out_g[ok] = np.stack([gx, gy, gz], axis=1) / spacing
    return out_v, out_g


def rigid_grid_query(values, origin, spacing, frame, points, tris, grad_points):
    frame = np.asarray(frame, dtype=np.float64)
    rot, t = frame[:3, :3], frame[:3, 3]
    d = np.asarray(points, dtype=np.float64) - t
    vals, gl = grid_query(values, origin, spacing, d @ rot, tris)
    gw = gl @ rot.T
    grad_points += gw
    out = np.zeros((3, 4))
    out[:, :3] = d.T @ gl
    out[:, 3] = -gw.sum(axis=0)
    return float(vals.sum()), out
