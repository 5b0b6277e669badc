"""Joint limits, two-hand pose pairs, and random augmentation of seed pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hand_model import FINGERS, JOINT_KINDS, N_ANGLE_JOINTS, HandPose

# degrees; per finger: root bend, root splay, middle bend, end bend
TABLE_LIMITS_DEG = {
    "thumb": ((-20, 40), (-30, 30), (-8, 50), (-10, 100)),
    "index": ((-25, 70), (-25, 15), (-4, 110), (-8, 90)),
    "middle": ((-25, 80), (-15, 15), (-7, 100), (-8, 90)),
    "ring": ((-25, 70), (-25, 15), (-10, 100), (-8, 90)),
    "pinky": ((-22, 70), (-20, 30), (-8, 90), (-8, 90)),
}
AXES = ("bend", "splay", "twist")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class JointLimits:
    """Closed per-axis ranges, radians, shaped (15, 3) over (bend, splay, twist)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64)
        hi = np.array(self.upper, dtype=np.float64)
        if lo.shape != (N_ANGLE_JOINTS, 3) or hi.shape != (N_ANGLE_JOINTS, 3):
            raise ConfigurationError("joint limits must be shaped (15, 3)")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigurationError("joint limits must be finite")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ConfigurationError("every joint range must contain 0 (the T-pose)")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_degrees(cls, table=None):
        table = TABLE_LIMITS_DEG if table is None else table
        lo = np.zeros((N_ANGLE_JOINTS, 3))
        hi = np.zeros((N_ANGLE_JOINTS, 3))
        for f, name in enumerate(FINGERS):
            try:
                root_b, root_s, mid_b, end_b = table[name]
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"malformed limits for {name!r}") from exc
            rows = 3 * f
            for (r, a), rng in (((rows, 0), root_b), ((rows, 1), root_s),
                                ((rows + 1, 0), mid_b), ((rows + 2, 0), end_b)):
                if len(rng) != 2 or rng[0] > rng[1]:
                    raise ConfigurationError(f"malformed range {rng!r} for {name}")
                lo[r, a], hi[r, a] = np.deg2rad(rng[0]), np.deg2rad(rng[1])
        return cls(lo, hi)

    def to_degrees(self):
        lo, hi = np.rad2deg(self.lower), np.rad2deg(self.upper)
        out = {}
        for f, name in enumerate(FINGERS):
            r = 3 * f
            out[name] = [[float(lo[r, 0]), float(hi[r, 0])], [float(lo[r, 1]), float(hi[r, 1])],
                         [float(lo[r + 1, 0]), float(hi[r + 1, 0])], [float(lo[r + 2, 0]), float(hi[r + 2, 0])]]
        return out


DEFAULT_LIMITS = JointLimits.from_degrees()


def joint_label(row: int) -> str:
    return f"{FINGERS[row // 3]}.{JOINT_KINDS[row % 3]}"


@dataclass(eq=False)
class PosePair:
    right: HandPose
    left: HandPose
    seed_id: int = -1
    aug_index: int = -1

    def copy(self):
        return PosePair(self.right.copy(), self.left.copy(), self.seed_id, self.aug_index)

    def __eq__(self, other):
        if not isinstance(other, PosePair):
            return NotImplemented
        return self.right == other.right and self.left == other.left

    def hands(self):
        return (self.right, self.left)

    def to_dict(self):
        return {"seed_id": self.seed_id, "aug_index": self.aug_index,
                "right": self.right.to_dict(), "left": self.left.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(HandPose.from_dict(d["right"]), HandPose.from_dict(d["left"]),
                   int(d.get("seed_id", -1)), int(d.get("aug_index", -1)))


@dataclass(frozen=True)
class AugmentationConfig:
    count: int = 30
    bend_range_deg: tuple = (-90.0, 90.0)
    splay_range_deg: tuple = (-30.0, 30.0)
    seed: int = 0

    def validate(self):
        if int(self.count) < 1:
            raise ConfigurationError("augmentation count must be >= 1")
        for rng in (self.bend_range_deg, self.splay_range_deg):
            if len(rng) != 2 or rng[0] > rng[1]:
                raise ConfigurationError(f"malformed offset range {rng!r}")


ROOT_ROWS = np.arange(0, N_ANGLE_JOINTS, 3)


def clamp_pose(pose: HandPose, limits: JointLimits = DEFAULT_LIMITS) -> HandPose:
    out = pose.copy()
    out.theta = np.clip(pose.theta, limits.lower, limits.upper)
    return out


def sample_offsets(rng: np.random.Generator, cfg: AugmentationConfig) -> np.ndarray:
    """(15, 3) offsets: bend on every joint, splay on root joints only, no twist."""
    off = np.zeros((N_ANGLE_JOINTS, 3))
    off[:, 0] = np.deg2rad(rng.uniform(*cfg.bend_range_deg, size=N_ANGLE_JOINTS))
    off[ROOT_ROWS, 1] = np.deg2rad(rng.uniform(*cfg.splay_range_deg, size=len(ROOT_ROWS)))
    return off


def augment_hand(pose: HandPose, offsets, limits: JointLimits = DEFAULT_LIMITS) -> HandPose:
    out = pose.copy()
    out.theta = pose.theta + offsets
    return clamp_pose(out, limits)


def augment_pose(seed_pair: PosePair, cfg: AugmentationConfig, limits: JointLimits = DEFAULT_LIMITS,
                 rng: np.random.Generator | None = None) -> list[PosePair]:
    """``cfg.count`` randomly articulated copies of ``seed_pair``; roots are kept."""
    cfg.validate()
    if not isinstance(limits, JointLimits):
        raise ConfigurationError("limits must be a JointLimits instance")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    out = []
    for i in range(int(cfg.count)):
        right = augment_hand(seed_pair.right, sample_offsets(rng, cfg), limits)
        left = augment_hand(seed_pair.left, sample_offsets(rng, cfg), limits)
        out.append(PosePair(right, left, seed_pair.seed_id, i))
    return out


@dataclass
class LimitViolation:
    side: str
    joint: str
    axis: str
    excess: float   # radians; positive above the range, negative below


def check_limits(pose: HandPose, limits: JointLimits = DEFAULT_LIMITS) -> list[LimitViolation]:
    over = pose.theta - limits.upper
    under = pose.theta - limits.lower
    out = []
    for r, a in zip(*np.nonzero((over > 0) | (under < 0))):
        excess = over[r, a] if over[r, a] > 0 else under[r, a]
        out.append(LimitViolation(pose.side, joint_label(r), AXES[a], float(excess)))
    return out


__all__ = [
    "AugmentationConfig", "ConfigurationError", "DEFAULT_LIMITS", "JointLimits", "LimitViolation",
    "PosePair", "TABLE_LIMITS_DEG", "augment_hand", "augment_pose", "check_limits", "clamp_pose",
    "sample_offsets",
]
