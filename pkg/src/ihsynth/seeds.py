"""Built-in pose library: single-hand gestures and two-hand seed interactions.

Gestures are written as per-finger (root bend, root splay, middle bend, end
bend) in degrees.  Splay is positive toward the pinky side; for the thumb a
positive splay moves it toward the index finger.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import kernels
from .geometry import axis_angle, exp_so3
from .hand_model import FINGERS, MIRROR, HandPose, build_canonical_hand, forward_kinematics, skin_vertices
from .pose_synthesis import DEFAULT_LIMITS, PosePair, clamp_pose

_EXT = (0, 0, 0, 0)
_FIST = (70, 0, 95, 60)

GESTURES = {
    "flat": {},
    "relaxed": {"thumb": (10, -5, 10, 10), "index": (15, 0, 20, 10), "middle": (18, 0, 25, 12),
                "ring": (20, 0, 28, 14), "pinky": (22, 0, 30, 15)},
    "fist": {"thumb": (30, 10, 40, 50), "index": _FIST, "middle": (78, 0, 95, 60), "ring": _FIST, "pinky": _FIST},
    "point": {"thumb": (30, 10, 40, 50), "index": _EXT, "middle": (78, 0, 95, 60), "ring": _FIST, "pinky": _FIST},
    "peace": {"thumb": (30, 15, 40, 50), "index": (0, -10, 0, 0), "middle": (0, 8, 0, 0), "ring": _FIST,
              "pinky": _FIST},
    "thumbs_up": {"thumb": (0, -20, 0, 0), "index": _FIST, "middle": (78, 0, 95, 60), "ring": _FIST,
                  "pinky": _FIST},
    "ok": {"thumb": (30, 15, 30, 40), "index": (45, 0, 60, 40), "middle": (10, 0, 10, 5), "ring": (10, 8, 10, 5),
           "pinky": (10, 18, 10, 5)},
    "pinch": {"thumb": (30, 10, 25, 30), "index": (40, 0, 50, 30), "middle": (25, 0, 30, 15),
              "ring": (28, 0, 32, 16), "pinky": (30, 0, 35, 18)},
    "claw": {"thumb": (10, -10, 30, 40), "index": (0, 0, 70, 60), "middle": (0, 0, 70, 60),
             "ring": (0, 0, 70, 60), "pinky": (0, 0, 70, 60)},
    "cup": {"thumb": (20, 10, 15, 10), "index": (30, 0, 30, 15), "middle": (30, 0, 30, 15),
            "ring": (30, 0, 30, 15), "pinky": (30, 0, 30, 15)},
    "spread": {"thumb": (0, -25, 0, 0), "index": (0, -20, 0, 0), "middle": (0, 0, 0, 0),
               "ring": (0, 12, 0, 0), "pinky": (0, 25, 0, 0)},
    "three": {"thumb": (30, 15, 40, 50), "index": _EXT, "middle": _EXT, "ring": _EXT, "pinky": _FIST},
    "horns": {"thumb": (30, 15, 40, 50), "index": _EXT, "middle": (78, 0, 95, 60), "ring": _FIST,
              "pinky": _EXT},
    "call_me": {"thumb": (0, -25, 0, 0), "index": _FIST, "middle": (78, 0, 95, 60), "ring": _FIST,
                "pinky": (0, 20, 0, 0)},
    "l_shape": {"thumb": (0, -28, 0, 0), "index": _EXT, "middle": (78, 0, 95, 60), "ring": _FIST,
                "pinky": _FIST},
    "hook": {"thumb": (10, 0, 20, 20), "index": (0, 0, 90, 80), "middle": (0, 0, 90, 80),
             "ring": (0, 0, 90, 80), "pinky": (0, 0, 85, 80)},
    "power_grip": {"thumb": (35, 20, 30, 30), "index": (50, 0, 60, 40), "middle": (52, 0, 62, 40),
                   "ring": (55, 0, 64, 42), "pinky": (58, 0, 66, 44)},
    "tripod": {"thumb": (30, 15, 30, 30), "index": (45, 5, 45, 30), "middle": (45, -5, 45, 30),
               "ring": (30, 0, 35, 18), "pinky": (32, 0, 38, 20)},
    "key_pinch": {"thumb": (10, 20, 10, 30), "index": (60, 0, 70, 40), "middle": (65, 0, 75, 45),
                  "ring": (65, 0, 75, 45), "pinky": (65, 0, 75, 45)},
    "tabletop": {"thumb": (10, 0, 0, 0), "index": (70, 0, 0, 0), "middle": (75, 0, 0, 0),
                 "ring": (70, 0, 0, 0), "pinky": (68, 0, 0, 0)},
}


def gesture_theta(name_or_table, scale: float = 1.0) -> np.ndarray:
    table = GESTURES[name_or_table] if isinstance(name_or_table, str) else name_or_table
    theta = np.zeros((15, 3))
    for f, finger in enumerate(FINGERS):
        rb, rs, mb, eb = table.get(finger, _EXT)
        theta[3 * f] = np.deg2rad([rb * scale, rs * scale, 0.0])
        theta[3 * f + 1, 0] = np.deg2rad(mb * scale)
        theta[3 * f + 2, 0] = np.deg2rad(eb * scale)
    return np.clip(theta, DEFAULT_LIMITS.lower, DEFAULT_LIMITS.upper)


def gesture_library() -> np.ndarray:
    """(40, 15, 3) natural articulations: every gesture at full and 60 % closure."""
    return np.stack([gesture_theta(name, s) for s in (1.0, 0.6) for name in GESTURES])


def natural_corpus(n: int, rng: np.random.Generator, jitter_deg: float = 3.0) -> np.ndarray:
    """``n`` jittered gesture articulations as (n, 45) vectors."""
    lib = gesture_library()
    base = lib[rng.integers(len(lib), size=n)]
    noise = np.zeros_like(base)
    noise[..., 0] = rng.normal(0.0, np.deg2rad(jitter_deg), size=base[..., 0].shape)
    noise[:, ::3, 1] = rng.normal(0.0, np.deg2rad(jitter_deg), size=base[:, ::3, 1].shape)
    out = np.clip(base + noise, DEFAULT_LIMITS.lower, DEFAULT_LIMITS.upper)
    return out.reshape(n, 45)


# -------------------------------------------------------------- two-hand seeds

def _rx(deg):
    return axis_angle(np.array([1.0, 0.0, 0.0]), np.deg2rad(deg))


def _ry(deg):
    return axis_angle(np.array([0.0, 1.0, 0.0]), np.deg2rad(deg))


def _rz(deg):
    return axis_angle(np.array([0.0, 0.0, 1.0]), np.deg2rad(deg))


# name, right gesture, left gesture, right root rotation, left root rotation,
# left palm-center offset from the right palm center, approach axis (left toward right)
SEED_SPECS = (
    ("prayer", "flat", "flat", _ry(-90), _ry(90), (0.0, 0.0, 0.0), (-1.0, 0.0, 0.0)),
    ("palms_offset", "relaxed", "relaxed", _ry(-90), _ry(90) @ _rx(20), (0.0, 0.03, 0.0), (-1.0, 0.0, 0.0)),
    ("crossed_palms", "flat", "relaxed", _ry(-90), _rx(90) @ _ry(90), (0.0, 0.0, 0.0), (-1.0, 0.0, 0.0)),
    ("fist_in_palm", "fist", "cup", np.eye(3), _ry(180), (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ("stacked", "flat", "relaxed", np.eye(3), _rz(30), (0.0, -0.01, 0.0), (0.0, 0.0, 1.0)),
    ("clasp", "power_grip", "power_grip", _ry(-90), _rx(180) @ _ry(90), (0.0, 0.0, 0.0), (-1.0, 0.0, 0.0)),
    ("fingertips", "tripod", "tripod", _rz(-90), _rz(90), (0.12, 0.0, 0.0), (-1.0, 0.0, 0.0)),
    ("hooked", "hook", "hook", _ry(-90), _rx(180) @ _ry(90), (0.0, 0.05, 0.0), (-1.0, 0.0, 0.0)),
)


@lru_cache(maxsize=2)
def _models():
    return build_canonical_hand("right"), build_canonical_hand("left")


def _posed(model, pose):
    kin = forward_kinematics(model, pose)
    return skin_vertices(model, kin)


def signed_gap(v_a, parts_a, v_b, parts_b, reach: float = 0.03) -> float:
    """Minimum surface gap between two posed hands; negative depth if they overlap."""
    depth = 0.0
    gap = np.inf
    for pts, verts, parts in ((v_a, v_b, parts_b), (v_b, v_a, parts_a)):
        for pf in parts:
            used = verts[np.unique(pf)]
            lo, hi = used.min(axis=0) - reach, used.max(axis=0) + reach
            sel = np.all((pts >= lo) & (pts <= hi), axis=1)
            if not sel.any():
                continue
            sd = kernels.signed_distance(pts[sel], verts[pf])
            depth = max(depth, float(-sd.min()))
            gap = min(gap, float(sd.min()))
    return -depth if depth > 0 else gap


def place_at_contact(right: HandPose, left: HandPose, axis, gap: float = 0.002, span: float = 0.25) -> HandPose:
    """Slide ``left`` along ``axis`` (pointing from left toward right) until the
    surface gap to ``right`` is ``gap``; returns the moved pose."""
    m_r, m_l = _models()
    v_r = _posed(m_r, right)
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)

    def g(lam):
        p = left.copy()
        p.root_translation = left.root_translation - lam * axis
        return signed_gap(v_r, m_r.part_faces, _posed(m_l, p), m_l.part_faces)

    lo, hi = -span, span   # lo: deep overlap, hi: far away
    if g(hi) < gap:
        raise ValueError("hands still touch at the far end of the approach span")
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        if g(mid) < gap:
            lo = mid
        else:
            hi = mid
    out = left.copy()
    out.root_translation = left.root_translation - hi * axis
    return out


def _palm_center(model, rotation):
    c = np.asarray(model.proportions.palm_center, dtype=float)
    return rotation @ (MIRROR @ c if model.side == "left" else c)


def authored_seed(index: int, rng: np.random.Generator | None = None, gap: float = 0.002) -> PosePair:
    """Seed pair ``index`` of SEED_SPECS; with ``rng``, a jittered variant."""
    name, g_r, g_l, rot_r, rot_l, offset, axis = SEED_SPECS[index % len(SEED_SPECS)]
    m_r, m_l = _models()
    theta_r, theta_l = gesture_theta(g_r), gesture_theta(g_l)
    rot_r = np.array(rot_r)
    rot_l = np.array(rot_l)
    if rng is not None:
        spin = exp_so3(rng.normal(0.0, np.deg2rad(8.0), 3))
        rot_r = spin @ rot_r
        rot_l = spin @ exp_so3(rng.normal(0.0, np.deg2rad(8.0), 3)) @ rot_l
        theta_r = theta_r + np.deg2rad(rng.normal(0.0, 4.0, theta_r.shape)) * _mask()
        theta_l = theta_l + np.deg2rad(rng.normal(0.0, 4.0, theta_l.shape)) * _mask()
        axis = spin @ np.asarray(axis, dtype=float)
        offset = spin @ np.asarray(offset, dtype=float)
    right = clamp_pose(HandPose("right", theta_r, rot_r, np.zeros(3)))
    # put the left palm center at the right palm center plus offset, then back off along the axis
    target = _palm_center(m_r, rot_r) + np.asarray(offset, dtype=float)
    left = clamp_pose(HandPose("left", theta_l, rot_l, target - _palm_center(m_l, rot_l)))
    left = place_at_contact(right, left, axis, gap=gap)
    return PosePair(right, left, seed_id=index)


def _mask():
    m = np.zeros((15, 3))
    m[:, 0] = 1.0
    m[::3, 1] = 1.0
    return m


def seed_library(n: int, seed: int = 0, gap: float = 0.002) -> list[PosePair]:
    """``n`` seed pairs: the authored set first, then jittered variants."""
    out = []
    for k in range(n):
        if k < len(SEED_SPECS):
            pair = authored_seed(k, None, gap)
        else:
            pair = authored_seed(k, np.random.default_rng([seed, k]), gap)
        pair.seed_id = k
        out.append(pair)
    return out


__all__ = [
    "GESTURES", "SEED_SPECS", "authored_seed", "gesture_library", "gesture_theta", "natural_corpus",
    "place_at_contact", "seed_library", "signed_gap",
]
