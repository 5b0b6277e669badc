"""Pose-refinement objective for a two-hand pair.

Four terms: spring attraction between paired anchors, part-wise penetration
measured with Omega grids, a squared hinge on the anatomic joint limits, and
the frozen naturalness prior.  Gradients are exact for a fixed set of grids
and anchor pairs, which the optimizer rebuilds on its own schedule.

Parameter vector (102 = 2 x 51), right hand first then left:
45 articulation angles, a 3-vector root-rotation tangent applied as
``exp(hat(w)) @ R_base``, and the 3-vector root translation.  The rotation
gradient is exact at w = 0; the optimizer folds w into R_base after each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .anchors import AnchorSet, anchor_state, attraction_loss, build_anchor_pairs
from .discriminator import MlpParams, adversarial_loss
from .geometry import exp_so3
from .hand_model import (
    HandModel, HandPose, forward_kinematics, kinematics_backward, skin_vertices, skinning_backward,
)
from .pose_synthesis import DEFAULT_LIMITS, JointLimits, PosePair, check_limits
from .sdf import DEFAULT_PADDING, DEFAULT_RESOLUTION, SdfGrid, build_sdf

HAND_PARAMS = 51
N_PARAMS = 2 * HAND_PARAMS
TERMS = ("attraction", "anatomic", "adversarial", "penetration")


@dataclass(frozen=True)
class LossWeights:
    """w1..w4 in objective order: attraction, anatomic, adversarial, penetration."""

    attraction: float = 1.0
    anatomic: float = 1.0
    adversarial: float = 1.0
    penetration: float = 1.0

    def __post_init__(self):
        if not all(np.isfinite(v) and v >= 0 for v in self.as_array()):
            raise ValueError("loss weights must be finite and non-negative")

    def as_array(self):
        return np.array([self.attraction, self.anatomic, self.adversarial, self.penetration])


def anatomic_loss(theta, limits: JointLimits = DEFAULT_LIMITS):
    """Sum of squared excursions outside the joint ranges, with gradient."""
    theta = np.asarray(theta, dtype=np.float64)
    beta = np.maximum(theta - limits.upper, 0.0) + np.minimum(theta - limits.lower, 0.0)
    return float(np.sum(beta * beta)), 2.0 * beta


# ------------------------------------------------------------ parameter vector

def pack_pair(pair: PosePair) -> np.ndarray:
    """Parameters of ``pair`` relative to itself (zero rotation tangents)."""
    x = np.zeros(N_PARAMS)
    for h, pose in enumerate(pair.hands()):
        o = h * HAND_PARAMS
        x[o:o + 45] = pose.theta.reshape(45)
        x[o + 48:o + 51] = pose.root_translation
    return x


def _hand_from(x, o, base: HandPose) -> HandPose:
    return HandPose(base.side, x[o:o + 45].reshape(15, 3).copy(),
                    exp_so3(x[o + 45:o + 48]) @ base.root_rotation, x[o + 48:o + 51].copy())


def apply_params(x, base: PosePair) -> PosePair:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} parameters, got shape {x.shape}")
    return PosePair(_hand_from(x, 0, base.right), _hand_from(x, HAND_PARAMS, base.left),
                    base.seed_id, base.aug_index)


# ---------------------------------------------------------------- frozen state

@dataclass(eq=False)
class FrozenState:
    """Grids and anchor pairs held fixed between rebuilds.

    Each grid is expressed in its part's joint frame and follows that joint
    rigidly as the pose changes.
    """

    grids_right: list
    grids_left: list
    pairs: list = field(default_factory=list)


def _part_grids(model: HandModel, pose: HandPose, resolution, padding):
    kin = forward_kinematics(model, pose)
    verts = skin_vertices(model, kin)
    return [build_sdf(verts, pf, resolution, padding, frame=fr, lazy=True, check=False)
            for pf, fr in zip(model.part_faces, kin.world)]


def _moving_penetration(points, grids, frames):
    """Omega summed over grids that ride on ``frames``.

    Returns the total, the gradient w.r.t. the query points, and the
    gradient w.r.t. the top rows of each frame.
    """
    total = 0.0
    g_pts = np.zeros_like(points)
    g_frames = np.zeros((len(grids), 3, 4))
    for j, (g, fr) in enumerate(zip(grids, frames)):
        val, gf = kernels.rigid_grid_query(g.values, g.origin, g.spacing, fr, points, g.triangles, g_pts)
        total += val
        g_frames[j] = gf
    return total, g_pts, g_frames


@dataclass(eq=False)
class Objective:
    """Everything the total loss needs besides the pose and the weights."""

    right: HandModel
    left: HandModel
    anchors: AnchorSet
    discriminator: MlpParams | None = None
    limits: JointLimits = DEFAULT_LIMITS
    resolution: int = DEFAULT_RESOLUTION
    padding: int = DEFAULT_PADDING
    length_unit: float = 50.0    # units per meter for attraction and penetration (2 cm units)

    def models(self):
        return (self.right, self.left)

    def freeze(self, pair: PosePair, pairs: bool = True, grids: FrozenState | None = None) -> FrozenState:
        """Grids from the current posed parts (or reused from ``grids``) and
        anchor pairs from the current anchor positions."""
        if grids is None:
            g_r = _part_grids(self.right, pair.right, self.resolution, self.padding)
            g_l = _part_grids(self.left, pair.left, self.resolution, self.padding)
        else:
            g_r, g_l = grids.grids_right, grids.grids_left
        state = FrozenState(g_r, g_l)
        if pairs:
            state.pairs = self.anchor_pairs(pair)
        return state

    def anchor_pairs(self, pair: PosePair):
        v_r = skin_vertices(self.right, forward_kinematics(self.right, pair.right))
        v_l = skin_vertices(self.left, forward_kinematics(self.left, pair.left))
        pos_r, n_r = anchor_state(v_r, self.right.faces, self.anchors)
        pos_l, n_l = anchor_state(v_l, self.left.faces, self.anchors)
        return build_anchor_pairs(pos_r, n_r, pos_l, n_l)

    def evaluate(self, x, base: PosePair, frozen: FrozenState, weights: LossWeights = LossWeights(),
                 need_grad: bool = True):
        """Weighted total, its gradient over the 102 parameters, and the raw terms."""
        pair = apply_params(x, base)
        poses = pair.hands()
        kins = [forward_kinematics(m, p) for m, p in zip(self.models(), poses)]
        verts = [skin_vertices(m, k) for m, k in zip(self.models(), kins)]
        grids = (frozen.grids_right, frozen.grids_left)
        w = weights

        terms = dict.fromkeys(TERMS, 0.0)
        g_verts = [np.zeros_like(v) for v in verts]
        g_world = [np.zeros((16, 3, 4)), np.zeros((16, 3, 4))]

        # vertices of each hand against the other hand's grids
        u = self.length_unit
        for h in (0, 1):
            o = 1 - h
            val, gp, gf = _moving_penetration(verts[h], grids[o], kins[o].world)
            terms["penetration"] += u * val
            g_verts[h] += (w.penetration * u) * gp
            g_world[o] += (w.penetration * u) * gf

        idx = self.anchors.indices
        att, ga_r, ga_l = attraction_loss(frozen.pairs, verts[0][idx], verts[1][idx])
        terms["attraction"] = u * u * att
        np.add.at(g_verts[0], idx, (w.attraction * u * u) * ga_r)
        np.add.at(g_verts[1], idx, (w.attraction * u * u) * ga_l)

        g_theta = []
        for pose in poses:
            val, ga = anatomic_loss(pose.theta, self.limits)
            terms["anatomic"] += val
            gt = w.anatomic * ga
            if self.discriminator is not None:
                val, gd = adversarial_loss(self.discriminator, pose)
                terms["adversarial"] += val
                gt = gt + w.adversarial * gd.reshape(15, 3)
            g_theta.append(gt)

        total = float(np.dot(w.as_array(), [terms[k] for k in TERMS]))
        if not need_grad:
            return total, None, terms
        grad = np.zeros(N_PARAMS)
        for h in (0, 1):
            model, pose, kin = self.models()[h], poses[h], kins[h]
            dth, dom, dtr = kinematics_backward(model, pose, kin, skinning_backward(model, g_verts[h]),
                                                g_world[h])
            o = h * HAND_PARAMS
            grad[o:o + 45] = (dth + g_theta[h]).reshape(45)
            grad[o + 45:o + 48] = dom
            grad[o + 48:o + 51] = dtr
        return total, grad, terms


__all__ = [
    "FrozenState", "HAND_PARAMS", "LossWeights", "N_PARAMS", "Objective", "SdfGrid", "TERMS",
    "anatomic_loss", "apply_params", "check_limits", "pack_pair",
]
