"""Rotation and triangle-mesh utilities shared across the package."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order


class FileFormatError(ValueError):
    """An input file is not of the expected format or version."""


class DegenerateGeometryError(ValueError):
    """Raised when a mesh cannot support a signed distance (open or non-manifold)."""


def hat(w):
    w = np.asarray(w, dtype=np.float64)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


GENERATORS = np.stack([hat(e) for e in np.eye(3)])


def axis_angle(axis, angle):
    """Rotation matrix about a unit ``axis`` by ``angle`` radians (Rodrigues)."""
    k = hat(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def exp_so3(w):
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + hat(w)
    return axis_angle(w / theta, theta)


def log_so3(r):
    cos = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < 1e-12:
        return np.zeros(3)
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off the symmetric part
        m = (r + np.eye(3)) / 2.0
        axis = m[np.argmax(np.diag(m))]
        axis = axis / np.linalg.norm(axis)
        return theta * axis
    return theta * v / (2.0 * np.sin(theta))


def orthonormalize(r):
    """Nearest rotation in the Frobenius sense."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rigid(rot, trans):
    t = np.eye(4)
    t[:3, :3] = rot
    t[:3, 3] = trans
    return t


def invert_rigid(t):
    out = np.eye(4)
    out[:3, :3] = t[:3, :3].T
    out[:3, 3] = -t[:3, :3].T @ t[:3, 3]
    return out


def face_normals(vertices, faces):
    v = np.asarray(vertices)
    n = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


def vertex_normals(vertices, faces):
    """Area-weighted vertex normals."""
    v = np.asarray(vertices)
    fn = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.where(norm > 0, norm, 1.0)


def check_watertight(faces):
    """Raise unless every directed edge is matched by exactly one opposite edge."""
    faces = np.asarray(faces)
    if len(faces) < 4:
        raise DegenerateGeometryError("a closed surface needs at least 4 triangles")
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    directed, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts != 1):
        raise DegenerateGeometryError("mesh has a repeated directed edge (non-manifold or flipped face)")
    forward = {tuple(x) for x in directed}
    for a, b in directed:
        if (b, a) not in forward:
            raise DegenerateGeometryError(f"boundary edge ({a}, {b}): mesh is not closed")


def vertex_adjacency(n_vertices, faces):
    faces = np.asarray(faces)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    data = np.ones(len(e), dtype=np.int8)
    adj = coo_matrix((data, (e[:, 0], e[:, 1])), shape=(n_vertices, n_vertices)).tocsr()
    adj.data[:] = 1
    return adj


def hop_distances(adjacency, source, max_hops=None):
    """Breadth-first hop counts from ``source``; unreachable vertices get -1."""
    n = adjacency.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    order, pred = breadth_first_order(adjacency, source, directed=False, return_predecessors=True)
    dist[source] = 0
    for v in order[1:]:
        dist[v] = dist[pred[v]] + 1
    if max_hops is not None:
        dist[dist > max_hops] = -1
    return dist


def write_obj(path, vertices, faces):
    path = Path(path)
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(vertices, dtype=float).tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces, dtype=int).tolist()]
    path.write_text("\n".join(lines) + "\n")


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def icosphere(radius=1.0, subdivisions=2, center=(0.0, 0.0, 0.0)):
    """Outward-oriented icosphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return v, np.array(faces, dtype=np.int64)
