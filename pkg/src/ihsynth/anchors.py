"""Contact anchors: selection by contact frequency, cross-hand pairing, and the
spring attraction between paired anchors."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .geometry import FileFormatError, hop_distances, vertex_adjacency, vertex_normals

ANCHOR_COUNT = 108
SPRING_SCALE = 0.02  # meters; pairs farther apart than this get no spring
ANCHOR_FILE_VERSION = 1


class InsufficientCorpusError(ValueError):
    pass


@dataclass(eq=False)
class AnchorSet:
    """Anchor vertex indices, shared by both hands (the meshes are mirror-indexed)."""

    indices: np.ndarray
    normals: np.ndarray          # canonical (right-hand) vertex normals at the anchors
    frequency: np.ndarray | None = None

    def __len__(self):
        return len(self.indices)

    def save(self, path):
        doc = {"format": "ihsynth-anchors", "version": ANCHOR_FILE_VERSION,
               "indices": [int(i) for i in self.indices],
               "normals": np.asarray(self.normals).tolist(),
               "frequency": None if self.frequency is None else [int(x) for x in self.frequency]}
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "ihsynth-anchors" or doc.get("version") != ANCHOR_FILE_VERSION:
            raise FileFormatError(f"{path}: not a version-{ANCHOR_FILE_VERSION} anchor file")
        freq = doc.get("frequency")
        return cls(np.array(doc["indices"], dtype=np.int64), np.array(doc["normals"], dtype=np.float64),
                   None if freq is None else np.array(freq, dtype=np.int64))


class AnchorPair(NamedTuple):
    right: int       # position in the anchor set, right hand
    left: int        # position in the anchor set, left hand
    rest: float      # anchor distance when the pair was built, meters
    k: float         # spring weight frozen at build time


def spring_weight(rest, scale: float = SPRING_SCALE):
    """0.5 cos(pi d / s) + 0.5 for d <= s, else 0."""
    rest = np.asarray(rest, dtype=np.float64)
    k = 0.5 * np.cos(np.pi / scale * rest) + 0.5
    return np.where(rest <= scale, k, 0.0)


def contact_frequency(vertices_a, vertices_b, parts_b, threshold: float = SPRING_SCALE):
    """Boolean per vertex of hand a: within ``threshold`` of hand b's surface."""
    pts = np.asarray(vertices_a)
    hit = np.zeros(len(pts), dtype=bool)
    for pf in parts_b:
        used = vertices_b[np.unique(pf)]
        lo, hi = used.min(axis=0) - threshold, used.max(axis=0) + threshold
        sel = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1) & ~hit)
        if sel.size == 0:
            continue
        d = kernels.unsigned_distance(pts[sel], vertices_b[pf])
        hit[sel[d < threshold]] = True
    return hit


def greedy_spread(order, adjacency, count: int, hops: int = 2):
    """Pick vertices in ``order``, skipping anything within ``hops`` of a pick."""
    n = adjacency.shape[0]
    reach = adjacency.copy()
    step = adjacency.copy()
    for _ in range(hops - 1):
        step = step @ adjacency
        reach = reach + step
    reach = reach.tolil()
    blocked = np.zeros(n, dtype=bool)
    picks = []
    for v in order:
        if blocked[v]:
            continue
        picks.append(int(v))
        blocked[v] = True
        blocked[reach.rows[v]] = True
        if len(picks) == count:
            break
    return np.array(picks, dtype=np.int64)


def select_anchors(model_right, model_left, corpus, count: int = ANCHOR_COUNT,
                   threshold: float = SPRING_SCALE) -> AnchorSet:
    """Rank vertices by how often they touch the other hand over ``corpus`` and
    pick greedily with 2-hop exclusion.

    ``corpus`` is a sequence of (right_vertices, left_vertices) posed meshes.
    Counts from both hands are summed per vertex index.
    """
    corpus = list(corpus)
    if not corpus:
        raise InsufficientCorpusError("anchor selection needs a non-empty corpus")
    freq = np.zeros(model_right.n_vertices, dtype=np.int64)
    for v_right, v_left in corpus:
        freq += contact_frequency(v_right, v_left, model_left.part_faces, threshold)
        freq += contact_frequency(v_left, v_right, model_right.part_faces, threshold)
    order = np.lexsort((np.arange(len(freq)), -freq))
    adj = vertex_adjacency(model_right.n_vertices, model_right.faces)
    picks = greedy_spread(order, adj, count)
    if len(picks) < count:
        raise InsufficientCorpusError(f"only {len(picks)} anchors satisfy the 2-hop spacing, {count} required")
    normals = vertex_normals(model_right.vertices, model_right.faces)[picks]
    return AnchorSet(picks, normals, freq)


def min_hop_distance(model, indices):
    """Smallest mesh hop count between any two of ``indices`` (-1 if none connected)."""
    adj = vertex_adjacency(model.n_vertices, model.faces)
    best = -1
    idx = set(int(i) for i in indices)
    for i in indices:
        d = hop_distances(adj, int(i))
        hits = [d[j] for j in idx if j != i and d[j] > 0]
        if hits and (best < 0 or min(hits) < best):
            best = min(hits)
    return best


def anchor_state(vertices, faces, anchors: AnchorSet):
    """Current positions and unit normals of the anchors on a posed mesh."""
    normals = vertex_normals(vertices, faces)[anchors.indices]
    return np.asarray(vertices)[anchors.indices], normals


def build_anchor_pairs(pos_right, normals_right, pos_left, normals_left,
                       scale: float = SPRING_SCALE) -> list[AnchorPair]:
    """Pair every right anchor with its nearest left anchor; keep opposed-normal
    pairs no farther apart than ``scale``."""
    pos_left = np.asarray(pos_left)
    if len(pos_left) == 0 or len(pos_right) == 0:
        return []
    dist, j = cKDTree(pos_left).query(np.asarray(pos_right))
    opposed = np.einsum("ij,ij->i", normals_right, np.asarray(normals_left)[j]) < 0.0
    keep = opposed & (dist <= scale)
    k = spring_weight(dist, scale)
    return [AnchorPair(int(i), int(j[i]), float(dist[i]), float(k[i])) for i in np.flatnonzero(keep)]


def attraction_loss(pairs, pos_right, pos_left):
    """Sum of 0.5 k ||a_r - a_l||^2 with gradients w.r.t. both anchor arrays."""
    pos_right = np.asarray(pos_right, dtype=np.float64)
    pos_left = np.asarray(pos_left, dtype=np.float64)
    g_right = np.zeros_like(pos_right)
    g_left = np.zeros_like(pos_left)
    if not pairs:
        return 0.0, g_right, g_left
    i = np.array([p.right for p in pairs])
    j = np.array([p.left for p in pairs])
    k = np.array([p.k for p in pairs])
    diff = pos_right[i] - pos_left[j]
    loss = 0.5 * float(np.sum(k * np.einsum("ij,ij->i", diff, diff)))
    force = k[:, None] * diff
    np.add.at(g_right, i, force)
    np.add.at(g_left, j, -force)
    return loss, g_right, g_left


def pair_distances(pairs, pos_right, pos_left):
    if not pairs:
        return np.zeros(0)
    i = np.array([p.right for p in pairs])
    j = np.array([p.left for p in pairs])
    return np.linalg.norm(np.asarray(pos_right)[i] - np.asarray(pos_left)[j], axis=1)


__all__ = [
    "ANCHOR_COUNT", "AnchorPair", "AnchorSet", "InsufficientCorpusError", "SPRING_SCALE",
    "anchor_state", "attraction_loss", "build_anchor_pairs", "contact_frequency", "greedy_spread",
    "min_hop_distance", "pair_distances", "select_anchors", "spring_weight",
]
