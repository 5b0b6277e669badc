"""Procedural articulated hand: canonical mesh, twist-splay-bend kinematics,
linear blend skinning and the 16-part vertex partition.

Conventions (right hand, canonical T-pose): wrist at the origin, fingers along
+y, palm facing -z, thumb on the -x side.  The left hand is the reflection
across the x = 0 plane.  Joint 0 is the wrist; finger ``f`` (thumb, index,
middle, ring, pinky) owns joints ``1 + 3 f + k`` for ``k`` = root, middle, end.

Each joint carries a right-handed frame with columns (twist, splay, bend):
twist along the bone, splay the palm normal made orthogonal to twist, and
bend = twist x splay.  A positive bend flexes the finger toward the palm and a
positive splay deviates it toward the pinky side, on both hands: the left
frames are the mirror conjugates of the right ones, so a given angle vector
describes the same articulation on either side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml

from .geometry import GENERATORS, check_watertight, invert_rigid, rigid, write_obj

FINGERS = ("thumb", "index", "middle", "ring", "pinky")
JOINT_KINDS = ("root", "middle", "end")
N_JOINTS = 16
N_ANGLE_JOINTS = 15
# 21-point convention: wrist, then per finger root, middle, end, tip
N_KEYPOINTS = 21
MIDDLE_MCP = 1 + 4 * 2
KEYPOINT_PARENTS = np.array(
    [-1] + [p for f in range(5) for p in (0, 1 + 4 * f, 2 + 4 * f, 3 + 4 * f)], dtype=np.int64
)
MIRROR = np.diag([-1.0, 1.0, 1.0])
PALM_NORMAL = np.array([0.0, 0.0, -1.0])

_RING = 8           # vertices around each finger capsule
_CAP_RINGS = 2
_BODY_RINGS = 4
_PALM_AROUND = 16
_PALM_RINGS = 9
_FALLOFF = 0.3      # fraction of a bone over which the parent weight fades out


class InvalidProportionsError(ValueError):
    pass


def joint_index(finger: int, kind: int) -> int:
    return 1 + 3 * finger + kind


def keypoint_index(finger: int, kind: int) -> int:
    """Index in the 21-point layout; ``kind`` 3 is the fingertip."""
    return 1 + 4 * finger + kind


@dataclass(frozen=True)
class FingerSpec:
    root: tuple
    direction: tuple
    lengths: tuple
    radii: tuple


@dataclass(frozen=True)
class Proportions:
    """Bone-length table in meters; right-hand coordinates."""

    palm_center: tuple = (0.0, 0.047, 0.0)
    palm_half_extents: tuple = (0.041, 0.050, 0.015)
    palm_exponent: float = 0.6
    fingers: tuple = (
        FingerSpec((-0.022, 0.025, -0.006), (-0.72, 0.68, -0.12), (0.042, 0.032, 0.028), (0.0115, 0.0105, 0.0095)),
        FingerSpec((-0.026, 0.090, 0.0), (-0.05, 1.0, 0.0), (0.040, 0.024, 0.021), (0.0095, 0.0088, 0.0080)),
        FingerSpec((-0.007, 0.094, 0.0), (0.0, 1.0, 0.0), (0.044, 0.028, 0.022), (0.0098, 0.0090, 0.0082)),
        FingerSpec((0.012, 0.090, 0.0), (0.04, 1.0, 0.0), (0.041, 0.027, 0.021), (0.0092, 0.0085, 0.0078)),
        FingerSpec((0.030, 0.082, 0.0), (0.10, 1.0, 0.0), (0.032, 0.020, 0.019), (0.0080, 0.0075, 0.0070)),
    )

    def validate(self):
        if len(self.fingers) != 5:
            raise InvalidProportionsError("exactly 5 fingers are required")
        if min(self.palm_half_extents) <= 0 or self.palm_exponent <= 0:
            raise InvalidProportionsError("palm dimensions must be positive")
        for name, f in zip(FINGERS, self.fingers):
            if len(f.lengths) != 3 or len(f.radii) != 3:
                raise InvalidProportionsError(f"{name}: 3 bone lengths and 3 radii required")
            if min(f.lengths) <= 0 or min(f.radii) <= 0:
                raise InvalidProportionsError(f"{name}: bone lengths and radii must be positive")
            if f.lengths[2] <= f.radii[2]:
                raise InvalidProportionsError(f"{name}: distal bone shorter than its radius")
            if np.linalg.norm(f.direction) == 0:
                raise InvalidProportionsError(f"{name}: zero direction")

    def to_dict(self):
        return {
            "palm_center": list(self.palm_center),
            "palm_half_extents": list(self.palm_half_extents),
            "palm_exponent": self.palm_exponent,
            "fingers": {
                name: {"root": list(f.root), "direction": list(f.direction),
                       "lengths": list(f.lengths), "radii": list(f.radii)}
                for name, f in zip(FINGERS, self.fingers)
            },
        }

    @classmethod
    def from_dict(cls, d):
        default = cls()
        fingers = []
        given = d.get("fingers", {})
        for name, f in zip(FINGERS, default.fingers):
            g = given.get(name, {})
            fingers.append(FingerSpec(
                tuple(g.get("root", f.root)), tuple(g.get("direction", f.direction)),
                tuple(g.get("lengths", f.lengths)), tuple(g.get("radii", f.radii)),
            ))
        return cls(
            palm_center=tuple(d.get("palm_center", default.palm_center)),
            palm_half_extents=tuple(d.get("palm_half_extents", default.palm_half_extents)),
            palm_exponent=float(d.get("palm_exponent", default.palm_exponent)),
            fingers=tuple(fingers),
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})


@dataclass(frozen=True, eq=False)
class KinematicTree:
    parents: np.ndarray          # (16,), -1 for the wrist
    positions: np.ndarray        # (16, 3) canonical joint positions
    bone_vectors: np.ndarray     # (16, 3) canonical offset from parent
    frames: np.ndarray           # (16, 3, 3) columns: twist, splay, bend

    @property
    def n_joints(self):
        return len(self.parents)


@dataclass(frozen=True, eq=False)
class HandModel:
    side: str
    tree: KinematicTree
    vertices: np.ndarray         # (V, 3) canonical mesh
    faces: np.ndarray            # (F, 3) outward-oriented
    skin_weights: np.ndarray     # (V, 16)
    tips: np.ndarray             # (5, 3) canonical fingertip points
    tip_vertices: np.ndarray     # (5,) mesh vertex carrying each tip
    partition: tuple             # 16 index arrays, one per joint
    part_faces: tuple            # 16 face arrays (global vertex indices)
    proportions: Proportions = field(default_factory=Proportions)

    # derived, filled in __post_init__
    canonical: np.ndarray = field(init=False, repr=False)       # (16, 4, 4) joint frames
    canonical_inv: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)         # (16, 4, 4) parent-relative
    tip_local: np.ndarray = field(init=False, repr=False)       # (5, 3) tips in end-joint frames
    vertices_h: np.ndarray = field(init=False, repr=False)      # (V, 4)

    def __post_init__(self):
        tree = self.tree
        canonical = np.stack([rigid(tree.frames[j], tree.positions[j]) for j in range(N_JOINTS)])
        inv = np.stack([invert_rigid(t) for t in canonical])
        offsets = np.empty_like(canonical)
        offsets[0] = canonical[0]
        for j in range(1, N_JOINTS):
            offsets[j] = inv[tree.parents[j]] @ canonical[j]
        ends = [joint_index(f, 2) for f in range(5)]
        tip_local = np.stack([
            tree.frames[e].T @ (self.tips[f] - tree.positions[e]) for f, e in enumerate(ends)
        ])
        vh = np.hstack([self.vertices, np.ones((len(self.vertices), 1))])
        for name, value in (("canonical", canonical), ("canonical_inv", inv), ("offsets", offsets),
                            ("tip_local", tip_local), ("vertices_h", vh)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def part_of_vertex(self):
        out = np.empty(self.n_vertices, dtype=np.int64)
        for j, idx in enumerate(self.partition):
            out[idx] = j
        return out


@dataclass(eq=False)
class HandPose:
    side: str
    theta: np.ndarray = field(default_factory=lambda: np.zeros((N_ANGLE_JOINTS, 3)))
    root_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64).reshape(N_ANGLE_JOINTS, 3)
        self.root_rotation = np.array(self.root_rotation, dtype=np.float64).reshape(3, 3)
        self.root_translation = np.array(self.root_translation, dtype=np.float64).reshape(3)
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")

    def copy(self):
        return HandPose(self.side, self.theta.copy(), self.root_rotation.copy(), self.root_translation.copy())

    def __eq__(self, other):
        if not isinstance(other, HandPose):
            return NotImplemented
        return (self.side == other.side and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.root_rotation, other.root_rotation)
                and np.array_equal(self.root_translation, other.root_translation))

    def is_valid(self):
        """Twist always zero; splay zero on middle and end joints."""
        non_root = [joint_index(f, k) - 1 for f in range(5) for k in (1, 2)]
        return bool(np.all(self.theta[:, 2] == 0.0) and np.all(self.theta[non_root, 1] == 0.0))

    def to_dict(self):
        return {"side": self.side, "theta": self.theta.tolist(),
                "root_rotation": self.root_rotation.tolist(),
                "root_translation": self.root_translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["side"], d["theta"], d["root_rotation"], d["root_translation"])


# ---------------------------------------------------------------- mesh building

def _tsb_frame(twist):
    t = twist / np.linalg.norm(twist)
    s = PALM_NORMAL - (PALM_NORMAL @ t) * t
    s = s / np.linalg.norm(s)
    b = np.cross(t, s)
    return np.stack([t, s, b], axis=1)


def _capsule(a, b, radius, frame, offset):
    """Closed capsule around segment a-b: pole, cap rings, body rings, cap rings, pole."""
    t, s, bn = frame[:, 0], frame[:, 1], frame[:, 2]
    phi = 2 * np.pi * np.arange(_RING) / _RING
    circle = np.cos(phi)[:, None] * s + np.sin(phi)[:, None] * bn
    caps = np.pi / 2 * np.arange(1, _CAP_RINGS + 1) / (_CAP_RINGS + 1)
    rings = [a - radius * np.cos(c) * t + radius * np.sin(c) * circle for c in caps]
    rings += [a + u * (b - a) + radius * circle for u in np.linspace(0.0, 1.0, _BODY_RINGS)]
    rings += [b + radius * np.cos(c) * t + radius * np.sin(c) * circle for c in caps[::-1]]
    verts = np.vstack([a - radius * t, *rings, b + radius * t])
    return verts, _tube_faces(len(rings), _RING, offset)


def _tube_faces(n_rings, around, offset):
    """Faces for [pole0, ring_0..ring_{n-1}, pole1] with rings ordered along +axis."""
    faces = []
    first = 1
    last = 1 + n_rings * around
    for i in range(around):
        j = (i + 1) % around
        faces.append([0, first + j, first + i])
    for r in range(n_rings - 1):
        base0 = 1 + r * around
        base1 = base0 + around
        for i in range(around):
            j = (i + 1) % around
            faces.append([base0 + i, base0 + j, base1 + j])
            faces.append([base0 + i, base1 + j, base1 + i])
    lastring = 1 + (n_rings - 1) * around
    for i in range(around):
        j = (i + 1) % around
        faces.append([last, lastring + i, lastring + j])
    return np.array(faces, dtype=np.int64) + offset


def _palm(props: Proportions):
    cx, cy, cz = props.palm_center
    ax, ay, az = props.palm_half_extents
    e = props.palm_exponent

    def spow(x):
        return np.sign(x) * np.abs(x) ** e

    # poles along +-y; rings ordered from -y to +y so the tube faces point outward
    eta = np.linspace(-np.pi / 2, np.pi / 2, _PALM_RINGS + 2)[1:-1]
    # with the frame (y, x, z) = right-handed (y, z, x) reversed: use angles that go x -> z
    omega = 2 * np.pi * np.arange(_PALM_AROUND) / _PALM_AROUND
    verts = [np.array([cx, cy - ay, cz])]
    for et in eta:
        y = cy + ay * spow(np.sin(et))
        rr = spow(np.cos(et))
        for om in omega:
            verts.append([cx + ax * rr * spow(np.cos(om)), y, cz + az * rr * spow(np.sin(om))])
    verts.append([cx, cy + ay, cz])
    return np.array(verts, dtype=np.float64)


def build_canonical_hand(side: str = "right", proportions: Proportions | None = None) -> HandModel:
    """Build the procedural hand for ``side``; the left hand mirrors the right."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    props = proportions or Proportions()
    props.validate()

    parents = np.full(N_JOINTS, -1, dtype=np.int64)
    positions = np.zeros((N_JOINTS, 3))
    frames = np.zeros((N_JOINTS, 3, 3))
    frames[0] = np.eye(3)
    tips = np.zeros((5, 3))
    seg_end = {}
    for f, spec in enumerate(props.fingers):
        d = np.asarray(spec.direction, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(spec.root, dtype=float)
        frame = _tsb_frame(d)
        for k in range(3):
            j = joint_index(f, k)
            parents[j] = 0 if k == 0 else j - 1
            positions[j] = p
            frames[j] = frame
            p = p + spec.lengths[k] * d
            seg_end[j] = p
        tips[f] = p

    # mesh: palm (part 0), then one capsule per finger joint
    palm = _palm(props)
    palm_faces = _tube_faces(_PALM_RINGS, _PALM_AROUND, 0)
    # palm rings go -y -> +y but sweep x -> z, i.e. clockwise about +y: flip to point outward
    palm_faces = palm_faces[:, ::-1]
    vert_blocks = [palm]
    face_blocks = [palm_faces]
    partition = [np.arange(len(palm))]
    weights_rows = [np.eye(N_JOINTS)[np.zeros(len(palm), dtype=int)]]
    offset = len(palm)
    tip_vertices = np.zeros(5, dtype=np.int64)
    for f, spec in enumerate(props.fingers):
        for k in range(3):
            j = joint_index(f, k)
            a = positions[j]
            b = seg_end[j]
            r = spec.radii[k]
            t = frames[j][:, 0]
            if k == 2:
                b = b - r * t  # the tip is the capsule apex
            verts, faces = _capsule(a, b, r, frames[j], offset)
            vert_blocks.append(verts)
            face_blocks.append(faces)
            partition.append(np.arange(offset, offset + len(verts)))
            # parent weight: 0.5 at (and before) the joint, cosine fade to 0 over _FALLOFF of the bone
            length = np.linalg.norm(seg_end[j] - a)
            u = np.clip(((verts - a) @ t) / length / _FALLOFF, 0.0, 1.0)
            w_parent = 0.25 * (1.0 + np.cos(np.pi * u))
            w = np.zeros((len(verts), N_JOINTS))
            w[:, j] = 1.0 - w_parent
            w[:, parents[j]] += w_parent
            weights_rows.append(w)
            if k == 2:
                tip_vertices[f] = offset + len(verts) - 1
            offset += len(verts)

    vertices = np.vstack(vert_blocks)
    faces = np.vstack(face_blocks)
    weights = np.vstack(weights_rows)
    weights = weights / weights.sum(axis=1, keepdims=True)
    bone_vectors = np.zeros((N_JOINTS, 3))
    bone_vectors[1:] = positions[1:] - positions[parents[1:]]

    if side == "left":
        vertices = vertices @ MIRROR
        faces = faces[:, ::-1].copy()
        positions = positions @ MIRROR
        bone_vectors = bone_vectors @ MIRROR
        tips = tips @ MIRROR
        frames = -MIRROR @ frames  # mirror conjugate: same angles, mirrored motion

    part_faces = tuple(face_blocks if side == "right" else [fb[:, ::-1].copy() for fb in face_blocks])
    for pf in part_faces:
        check_watertight(pf)

    tree = KinematicTree(parents, positions, bone_vectors, frames)
    for arr in (parents, positions, bone_vectors, frames, vertices, faces, weights, tips, tip_vertices):
        arr.setflags(write=False)
    return HandModel(side, tree, vertices, faces, weights, tips, tip_vertices,
                     tuple(partition), part_faces, props)


# ------------------------------------------------------------------- kinematics

def local_rotation(angles):
    """R_b(bend) R_s(splay) R_t(twist) in frame coordinates (twist=x, splay=y, bend=z)."""
    b, s, t = angles
    cb, sb = np.cos(b), np.sin(b)
    cs, ss = np.cos(s), np.sin(s)
    ct, st = np.cos(t), np.sin(t)
    rz = np.array([[cb, -sb, 0.0], [sb, cb, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cs, 0.0, ss], [0.0, 1.0, 0.0], [-ss, 0.0, cs]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    return rz, ry, rx


class Kinematics(NamedTuple):
    world: np.ndarray      # (16, 4, 4) posed joint frames; translation = joint position
    skinning: np.ndarray   # (16, 4, 4) world @ canonical_inv; identity in the T-pose
    locals_: tuple         # per joint (rz, ry, rx) factors, for the backward pass


def forward_kinematics(model: HandModel, pose: HandPose) -> Kinematics:
    world = np.empty((N_JOINTS, 4, 4))
    world[0] = rigid(pose.root_rotation, pose.root_translation) @ model.canonical[0]
    factors = [None]
    for j in range(1, N_JOINTS):
        rz, ry, rx = local_rotation(pose.theta[j - 1])
        loc = np.eye(4)
        loc[:3, :3] = rz @ ry @ rx
        world[j] = world[model.tree.parents[j]] @ model.offsets[j] @ loc
        factors.append((rz, ry, rx))
    skinning = world @ model.canonical_inv
    return Kinematics(world, skinning, tuple(factors))


def skin_vertices(model: HandModel, transforms) -> np.ndarray:
    """Posed vertices from per-joint skinning transforms (Kinematics or (16,4,4))."""
    g = transforms.skinning if isinstance(transforms, Kinematics) else transforms
    blended = (model.skin_weights @ g[:, :3, :].reshape(-1, 12)).reshape(-1, 3, 4)
    return np.einsum("vab,vb->va", blended, model.vertices_h)


def joint_positions(model: HandModel, transforms) -> np.ndarray:
    """21 keypoints: wrist, then per finger root, middle, end joints and tip."""
    world = transforms.world if isinstance(transforms, Kinematics) else transforms
    out = np.empty((N_KEYPOINTS, 3))
    out[0] = world[0, :3, 3]
    for f in range(5):
        for k in range(3):
            out[keypoint_index(f, k)] = world[joint_index(f, k), :3, 3]
        end = world[joint_index(f, 2)]
        out[keypoint_index(f, 3)] = end[:3, :3] @ model.tip_local[f] + end[:3, 3]
    return out


def posed_mesh(model: HandModel, pose: HandPose):
    kin = forward_kinematics(model, pose)
    return kin, skin_vertices(model, kin)


def skinning_backward(model: HandModel, grad_vertices) -> np.ndarray:
    """dL/d(skinning transform rows) (16, 3, 4) from dL/d(posed vertices)."""
    outer = (grad_vertices[:, :, None] * model.vertices_h[:, None, :]).reshape(-1, 12)
    return (model.skin_weights.T @ outer).reshape(-1, 3, 4)


def kinematics_backward(model: HandModel, pose: HandPose, kin: Kinematics, grad_skinning, grad_world=None):
    """Reverse pass through forward kinematics.

    ``grad_world`` optionally adds gradients taken directly w.r.t. the top
    three rows of the world joint frames.  Returns gradients for the (15, 3)
    angles, for a rotation perturbation ``exp(hat(w)) @ root_rotation`` at
    w = 0, and for the root translation.
    """
    dworld = np.zeros((N_JOINTS, 4, 4))
    dworld[:, :3, :] = np.einsum("jab,jcb->jac", grad_skinning, model.canonical_inv)
    if grad_world is not None:
        dworld[:, :3, :] += grad_world
    dtheta = np.zeros((N_ANGLE_JOINTS, 3))
    parents = model.tree.parents
    for j in range(N_JOINTS - 1, 0, -1):
        p = parents[j]
        rz, ry, rx = kin.locals_[j]
        loc = np.eye(4)
        loc[:3, :3] = rz @ ry @ rx
        a = model.offsets[j] @ loc
        dworld[p] += dworld[j] @ a.T
        dloc = (kin.world[p] @ model.offsets[j])[:3, :3].T @ dworld[j][:3, :3]
        b, s, t = pose.theta[j - 1]
        drz = np.array([[-np.sin(b), -np.cos(b), 0.0], [np.cos(b), -np.sin(b), 0.0], [0.0, 0.0, 0.0]])
        dry = np.array([[-np.sin(s), 0.0, np.cos(s)], [0.0, 0.0, 0.0], [-np.cos(s), 0.0, -np.sin(s)]])
        drx = np.array([[0.0, 0.0, 0.0], [0.0, -np.sin(t), -np.cos(t)], [0.0, np.cos(t), -np.sin(t)]])
        dtheta[j - 1, 0] = np.sum(dloc * (drz @ ry @ rx))
        dtheta[j - 1, 1] = np.sum(dloc * (rz @ dry @ rx))
        dtheta[j - 1, 2] = np.sum(dloc * (rz @ ry @ drx))
    droot = dworld[0] @ model.canonical[0].T
    drot = droot[:3, :3]
    domega = np.einsum("ab,kac,cb->k", drot, GENERATORS, pose.root_rotation)
    dtrans = droot[:3, 3].copy()
    return dtheta, domega, dtrans


# ------------------------------------------------------------ pose <-> vector

def pose_to_vector(pose: HandPose) -> np.ndarray:
    """45 articulation angles, finger-major, joint-minor, (bend, splay, twist)."""
    return pose.theta.reshape(-1).copy()


def vector_to_pose(vec, side="right", root_rotation=None, root_translation=None) -> HandPose:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (45,):
        raise ValueError(f"expected a 45-vector, got shape {vec.shape}")
    return HandPose(side, vec.reshape(N_ANGLE_JOINTS, 3).copy(),
                    np.eye(3) if root_rotation is None else root_rotation,
                    np.zeros(3) if root_translation is None else root_translation)


def mirror_pose(pose: HandPose) -> HandPose:
    """The same articulation on the other hand, reflected across x = 0."""
    other = "left" if pose.side == "right" else "right"
    return HandPose(other, pose.theta.copy(), MIRROR @ pose.root_rotation @ MIRROR,
                    MIRROR @ pose.root_translation)


def export_obj(model: HandModel, path, pose: HandPose | None = None):
    verts = model.vertices if pose is None else posed_mesh(model, pose)[1]
    write_obj(path, verts, model.faces)
