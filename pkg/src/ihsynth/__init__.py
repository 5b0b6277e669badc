"""Synthesis of valid, natural, tightly interacting two-hand poses.

Submodules: ``hand_model`` (mesh, kinematics, skinning), ``pose_synthesis``
(limits, augmentation), ``sdf`` and ``anchors`` (penetration and attraction
terms), ``discriminator`` (naturalness prior), ``losses`` and ``optimizer``
(objective, Adam refinement, validity filter), ``scene`` (camera rigs,
annotation export), ``metrics`` (evaluation) and ``cli``.
"""

from .hand_model import HandModel, HandPose, build_canonical_hand, forward_kinematics, skin_vertices
from .kernels import BACKEND
from .pose_synthesis import DEFAULT_LIMITS, AugmentationConfig, JointLimits, PosePair

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig", "BACKEND", "DEFAULT_LIMITS", "HandModel", "HandPose", "JointLimits", "PosePair",
    "build_canonical_hand", "forward_kinematics", "skin_vertices",
]
