"""Modified signed distance grids and the part-wise penetration loss.

A grid stores ``Omega = -min(SDF, 0)`` (positive inside, zero outside) at the
nodes of a cubic lattice laid out in a rigid frame attached to the submesh.
Nodes are evaluated lazily: a grid built with ``lazy=True`` holds NaN until a
query touches a node, and the value written then is exactly what an eager
build would have stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import DegenerateGeometryError, check_watertight

DEFAULT_RESOLUTION = 32
DEFAULT_PADDING = 3


@dataclass(eq=False)
class SdfGrid:
    origin: np.ndarray       # first node, grid-frame coordinates
    spacing: float
    resolution: int
    values: np.ndarray       # (N, N, N); NaN marks a node not evaluated yet
    rotation: np.ndarray     # grid frame -> world
    translation: np.ndarray
    triangles: np.ndarray    # (T, 3, 3) in grid-frame coordinates
    lo: np.ndarray           # world-space AABB of the node lattice
    hi: np.ndarray

    def to_local(self, points):
        return (np.asarray(points) - self.translation) @ self.rotation

    def node_positions(self):
        """World coordinates of all nodes, shaped (N, N, N, 3)."""
        r = np.arange(self.resolution) * self.spacing
        g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1) + self.origin
        return g @ self.rotation.T + self.translation

    def fill(self):
        """Evaluate every pending node."""
        pending = np.isnan(self.values)
        if pending.any():
            idx = np.argwhere(pending)
            sdf = kernels.signed_distance(self.origin + idx * self.spacing, self.triangles)
            self.values[pending] = np.where(sdf < 0.0, -sdf, 0.0)
        return self


def build_sdf(vertices, faces, resolution: int = DEFAULT_RESOLUTION, padding: int = DEFAULT_PADDING,
              frame=None, lazy: bool = False, check: bool = True) -> SdfGrid:
    """Grid of Omega for the closed mesh (vertices, faces).

    ``frame`` is an optional rigid 4x4 placing the lattice axes; by default
    the lattice is world-axis aligned.  The lattice is cubic and centered on
    the mesh bounding box with ``padding`` empty cells on its longest side.
    """
    if resolution < 8:
        raise ValueError("grid resolution must be >= 8")
    if resolution - 1 - 2 * padding < 1:
        raise ValueError("padding leaves no interior cells")
    faces = np.asarray(faces)
    if check:
        check_watertight(faces)
    if frame is None:
        rot, trans = np.eye(3), np.zeros(3)
    else:
        frame = np.asarray(frame)
        rot, trans = frame[:3, :3], frame[:3, 3]
    local = (np.asarray(vertices, dtype=np.float64) - trans) @ rot
    used = local[np.unique(faces)]
    lo, hi = used.min(axis=0), used.max(axis=0)
    extent = float((hi - lo).max())
    if not extent > 0.0:
        raise DegenerateGeometryError("mesh has zero extent")
    spacing = extent / (resolution - 1 - 2 * padding)
    origin = (lo + hi) / 2.0 - spacing * (resolution - 1) / 2.0
    tris = np.ascontiguousarray(local[faces])
    corners = origin + spacing * (resolution - 1) * np.array(
        [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float)
    world_corners = corners @ rot.T + trans
    grid = SdfGrid(origin, spacing, resolution, np.full((resolution,) * 3, np.nan),
                   rot.copy(), trans.copy(), tris, world_corners.min(axis=0), world_corners.max(axis=0))
    if not lazy:
        grid.fill()
    return grid


def omega_query(grid: SdfGrid, points):
    """Trilinear Omega and its world-space gradient at ``points``.

    Accepts a single point (3,) or an array (M, 3).  Points outside the node
    lattice give zero value and zero gradient.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    vals, grads = kernels.grid_query(grid.values, grid.origin, grid.spacing, grid.to_local(pts), grid.triangles)
    grads = grads @ grid.rotation.T
    if single:
        return float(vals[0]), grads[0]
    return vals, grads


@dataclass(eq=False)
class PosedHand:
    """A posed mesh with its part decomposition and per-part rigid frames."""

    vertices: np.ndarray
    part_faces: tuple
    part_frames: np.ndarray   # (16, 4, 4)


def build_hand_grids(hand: PosedHand, resolution: int = DEFAULT_RESOLUTION,
                     padding: int = DEFAULT_PADDING, lazy: bool = True) -> list[SdfGrid]:
    """One grid per part, laid out in that part's joint frame.

    Part topology is validated when the hand model is built, so the per-call
    watertightness check is skipped here.
    """
    return [build_sdf(hand.vertices, pf, resolution, padding, frame=fr, lazy=lazy, check=False)
            for pf, fr in zip(hand.part_faces, hand.part_frames)]


def penetration_side(points, grids):
    """Sum over grids and points of Omega, with per-point gradient."""
    pts = np.asarray(points, dtype=np.float64)
    total = 0.0
    grad = np.zeros_like(pts)
    for g in grids:
        inside = np.all((pts >= g.lo) & (pts <= g.hi), axis=1)
        if not inside.any():
            continue
        sel = np.flatnonzero(inside)
        vals, gr = omega_query(g, pts[sel])
        total += float(vals.sum())
        grad[sel] += gr
    return total, grad


def penetration_loss(hand_left: PosedHand, hand_right: PosedHand, resolution: int = DEFAULT_RESOLUTION,
                     grids=None, padding: int = DEFAULT_PADDING):
    """L_p = L_p^right + L_p^left with gradients for both hands' vertices.

    ``grids`` may carry prebuilt ``(grids_left, grids_right)``; they are then
    treated as fixed, which is also what the gradient assumes.
    """
    if grids is None:
        grids = (build_hand_grids(hand_left, resolution, padding),
                 build_hand_grids(hand_right, resolution, padding))
    grids_left, grids_right = grids
    l_right, g_right = penetration_side(hand_right.vertices, grids_left)
    l_left, g_left = penetration_side(hand_left.vertices, grids_right)
    return l_right + l_left, g_left, g_right


def penetration_depths(points, vertices, part_faces, margin: float = 0.0):
    """Brute-force per-point depth inside each part (max over parts), no grid.

    Parts whose bounding box does not contain a point cannot contain it, so
    only those candidates reach the exact signed-distance kernel.
    """
    pts = np.asarray(points, dtype=np.float64)
    depth = np.zeros(len(pts))
    for pf in part_faces:
        used = vertices[np.unique(pf)]
        lo, hi = used.min(axis=0) - margin, used.max(axis=0) + margin
        sel = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1))
        if sel.size == 0:
            continue
        sd = kernels.signed_distance(pts[sel], vertices[pf])
        depth[sel] = np.maximum(depth[sel], np.where(sd < 0.0, -sd, 0.0))
    return depth


def max_penetration(hand_left: PosedHand, hand_right: PosedHand) -> float:
    """Deepest vertex of either hand inside any part of the other hand, meters."""
    d_right = penetration_depths(hand_right.vertices, hand_left.vertices, hand_left.part_faces)
    d_left = penetration_depths(hand_left.vertices, hand_right.vertices, hand_right.part_faces)
    return float(max(d_right.max(initial=0.0), d_left.max(initial=0.0)))


__all__ = [
    "DEFAULT_PADDING", "DEFAULT_RESOLUTION", "DegenerateGeometryError", "PosedHand", "SdfGrid",
    "build_hand_grids", "build_sdf", "max_penetration", "omega_query", "penetration_depths",
    "penetration_loss", "penetration_side",
]
