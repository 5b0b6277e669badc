import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ihsynth.hand_model import HandPose
from ihsynth.pose_synthesis import (
    DEFAULT_LIMITS, ROOT_ROWS, AugmentationConfig, ConfigurationError, JointLimits, PosePair, augment_pose,
    check_limits, clamp_pose,
)

NON_ROOT = np.setdiff1d(np.arange(15), ROOT_ROWS)


def seed_pair():
    rng = np.random.default_rng(2)
    t = np.zeros((15, 3))
    t[:, 0] = rng.uniform(0, 0.5, 15)
    return PosePair(HandPose("right", t), HandPose("left", t[::-1].copy(), np.eye(3), [0.1, 0, 0]), 4)


def test_zero_ranges_give_the_seed():
    cfg = AugmentationConfig(5, (0.0, 0.0), (0.0, 0.0), 1)
    seed = seed_pair()
    out = augment_pose(seed, cfg)
    assert len(out) == 5
    for p in out:
        assert p == seed
        assert p.seed_id == 4


def test_structure_of_augmented_poses():
    out = augment_pose(seed_pair(), AugmentationConfig(50, seed=3))
    for p in out:
        for h in p.hands():
            assert np.all(h.theta[NON_ROOT, 1] == 0.0)
            assert np.all(h.theta[:, 2] == 0.0)
            assert check_limits(h) == []
            assert h.is_valid()
        assert np.array_equal(p.left.root_translation, [0.1, 0, 0])


def test_thumb_root_bend_range():
    seed = PosePair(HandPose("right"), HandPose("left"))
    out = augment_pose(seed, AugmentationConfig(10_000, seed=0))
    b = np.rad2deg([p.right.theta[0, 0] for p in out])
    assert b.min() >= -20.0 - 1e-9 and b.max() <= 40.0 + 1e-9
    # offsets span [-90, 90], so both bounds are reached often
    assert np.isclose(b.min(), -20.0) and np.isclose(b.max(), 40.0)


def test_determinism():
    a = augment_pose(seed_pair(), AugmentationConfig(4, seed=9))
    b = augment_pose(seed_pair(), AugmentationConfig(4, seed=9))
    assert all(x == y for x, y in zip(a, b))


def test_malformed_limits():
    with pytest.raises(ConfigurationError):
        JointLimits(np.zeros((14, 3)), np.zeros((14, 3)))
    with pytest.raises(ConfigurationError):
        JointLimits.from_degrees({"thumb": ((10, 40),) * 4})
    with pytest.raises(ConfigurationError):
        augment_pose(seed_pair(), AugmentationConfig(1), limits="table")
    with pytest.raises(ConfigurationError):
        augment_pose(seed_pair(), AugmentationConfig(0))


def test_clamp_examples():
    t = np.zeros((15, 3))
    t[0, 0] = np.deg2rad(50)
    p = clamp_pose(HandPose("right", t))
    assert np.rad2deg(p.theta[0, 0]) == pytest.approx(40.0)
    ok = HandPose("right", np.full((15, 3), 0.0))
    assert clamp_pose(ok) == ok


@settings(max_examples=50)
@given(arrays(np.float64, (15, 3), elements=st.floats(-4.0, 4.0)))
def test_clamp_idempotent_and_valid(theta):
    p = clamp_pose(HandPose("right", theta))
    assert clamp_pose(p) == p
    assert check_limits(p) == []


def test_check_limits_report():
    t = np.zeros((15, 3))
    t[0, 0] = np.deg2rad(50)
    v = check_limits(HandPose("right", t))
    assert len(v) == 1
    assert v[0].joint == "thumb.root" and v[0].axis == "bend"
    assert np.rad2deg(v[0].excess) == pytest.approx(10.0)
    assert check_limits(HandPose("right")) == []


def test_limits_degrees_round_trip():
    back = JointLimits.from_degrees(DEFAULT_LIMITS.to_degrees())
    assert np.allclose(back.lower, DEFAULT_LIMITS.lower) and np.allclose(back.upper, DEFAULT_LIMITS.upper)


def test_pair_dict_round_trip():
    p = seed_pair()
    q = PosePair.from_dict(p.to_dict())
    assert q == p and q.seed_id == p.seed_id
