import numpy as np
import pytest

from ihsynth.anchors import select_anchors
from ihsynth.discriminator import init_params, label_probability, train
from ihsynth.hand_model import build_canonical_hand, forward_kinematics, skin_vertices
from ihsynth.losses import Objective
from ihsynth.pose_synthesis import AugmentationConfig, augment_pose, sample_offsets
from ihsynth.seeds import natural_corpus, seed_library


def posed(model, pose):
    return skin_vertices(model, forward_kinematics(model, pose))


@pytest.fixture(scope="session")
def right():
    return build_canonical_hand("right")


@pytest.fixture(scope="session")
def left():
    return build_canonical_hand("left")


@pytest.fixture(scope="session")
def models(right, left):
    return right, left


@pytest.fixture(scope="session")
def seeds():
    return seed_library(8)


@pytest.fixture(scope="session")
def anchors(right, left, seeds):
    corpus = []
    for s in seeds:
        for p in [s] + augment_pose(s, AugmentationConfig(count=3, seed=1)):
            corpus.append((posed(right, p.right), posed(left, p.left)))
    return select_anchors(right, left, corpus)


@pytest.fixture(scope="session")
def trained_disc():
    rng = np.random.default_rng(11)
    natural = natural_corpus(1000, rng)
    base = natural_corpus(1000, rng).reshape(-1, 15, 3)
    cfg = AugmentationConfig()
    offsets = np.stack([sample_offsets(rng, cfg) for _ in range(len(base))])
    perturbed = (base + offsets).reshape(-1, 45)
    labels = label_probability(offsets)
    result = train(init_params(rng), natural[:800], perturbed[:800], labels[:800], epochs=15, rng=rng)
    return result, natural[800:], perturbed[800:], labels[800:]


@pytest.fixture(scope="session")
def objective(right, left, anchors, trained_disc):
    return Objective(right, left, anchors, trained_disc[0].params)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Lines printed again in the terminal summary, one per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
