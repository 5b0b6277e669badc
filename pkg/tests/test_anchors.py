import numpy as np
import pytest

from ihsynth.anchors import (
    ANCHOR_COUNT, AnchorPair, AnchorSet, InsufficientCorpusError, attraction_loss, build_anchor_pairs,
    min_hop_distance, pair_distances, select_anchors, spring_weight,
)
from ihsynth.geometry import FileFormatError


@pytest.mark.parametrize("d, k", [(0.0, 1.0), (0.01, 0.5), (0.02, 0.0), (0.03, 0.0)])
def test_spring_weight(d, k):
    assert spring_weight(d) == pytest.approx(k, abs=1e-15)


def test_anchor_count_and_spacing(right, anchors):
    assert len(anchors) == ANCHOR_COUNT == 108
    assert len(set(anchors.indices.tolist())) == 108
    assert min_hop_distance(right, anchors.indices) >= 3


def test_palm_only_corpus(right, left):
    """Only palm vertices touch: the contact-positive picks are all palm and rank first.

    The palm holds just 14 vertices under 2-hop exclusion, so the rest of the 108
    are filled from zero-frequency vertices.
    """
    palm = right.partition[0]
    corpus = []
    for shift in (0.0, 1e-7):
        v_left = right.vertices + 1.0
        v_left[palm] = right.vertices[palm] + shift
        corpus.append((right.vertices, v_left))
    got = select_anchors(right, left, corpus, threshold=1e-6)
    # brute-force recount: the only vertices within 1e-6 of the other mesh are coincident palm vertices
    expect = np.zeros(right.n_vertices, dtype=np.int64)
    expect[palm] = 2 * len(corpus)
    assert np.array_equal(got.frequency, expect)
    touching = got.frequency[got.indices] > 0
    assert np.all(np.isin(got.indices[touching], palm))
    assert touching.sum() == 14
    assert np.all(touching[:14])


def test_empty_corpus(right, left):
    with pytest.raises(InsufficientCorpusError):
        select_anchors(right, left, [])


def test_anchor_file_round_trip(tmp_path, anchors):
    anchors.save(tmp_path / "a.json")
    back = AnchorSet.load(tmp_path / "a.json")
    assert np.array_equal(back.indices, anchors.indices)
    assert np.array_equal(back.normals, anchors.normals)
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(FileFormatError):
        AnchorSet.load(tmp_path / "bad.json")


def test_pairing_rules():
    up, down = np.array([[0.0, 0.0, 1.0]]), np.array([[0.0, 0.0, -1.0]])
    origin = np.zeros((1, 3))
    # opposed normals, 1 cm apart: kept with k = 0.5
    pairs = build_anchor_pairs(origin, up, [[0.0, 0.0, 0.01]], down)
    assert len(pairs) == 1 and pairs[0].k == pytest.approx(0.5)
    assert pairs[0].rest == pytest.approx(0.01)
    # same-facing normals: dropped
    assert build_anchor_pairs(origin, up, [[0.0, 0.0, 0.01]], up) == []
    # beyond the spring scale: dropped
    assert build_anchor_pairs(origin, up, [[0.0, 0.0, 0.03]], down) == []
    assert build_anchor_pairs(origin, up, np.zeros((0, 3)), np.zeros((0, 3))) == []


def test_pairs_nearest_neighbour():
    pos_r = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    pos_l = np.array([[0.101, 0.0, 0.0], [0.002, 0.0, 0.0]])
    n_r = np.tile([1.0, 0.0, 0.0], (2, 1))
    pairs = build_anchor_pairs(pos_r, n_r, pos_l, -n_r)
    assert [(p.right, p.left) for p in pairs] == [(0, 1), (1, 0)]


def test_attraction_examples():
    pos = np.zeros((1, 3))
    loss, gr, gl = attraction_loss([AnchorPair(0, 0, 0.0, 1.0)], pos, pos)
    assert loss == 0.0 and not gr.any() and not gl.any()
    loss, _, _ = attraction_loss([AnchorPair(0, 0, 0.01, 1.0)], pos, [[0.01, 0.0, 0.0]])
    assert loss == pytest.approx(5e-5, rel=1e-12)
    assert attraction_loss([], pos, pos)[0] == 0.0


def test_attraction_gradient_finite_differences():
    rng = np.random.default_rng(0)
    pr, pl = rng.normal(0, 0.01, (6, 3)), rng.normal(0, 0.01, (5, 3))
    pairs = [AnchorPair(i, (2 * i) % 5, 0.0, float(k)) for i, k in enumerate(rng.uniform(0.1, 1.0, 6))]
    _, gr, gl = attraction_loss(pairs, pr, pl)
    h = 1e-7
    num_r = np.zeros_like(pr)
    num_l = np.zeros_like(pl)
    for idx in np.ndindex(pr.shape):
        e = np.zeros_like(pr)
        e[idx] = h
        num_r[idx] = (attraction_loss(pairs, pr + e, pl)[0] - attraction_loss(pairs, pr - e, pl)[0]) / (2 * h)
    for idx in np.ndindex(pl.shape):
        e = np.zeros_like(pl)
        e[idx] = h
        num_l[idx] = (attraction_loss(pairs, pr, pl + e)[0] - attraction_loss(pairs, pr, pl - e)[0]) / (2 * h)
    g, n = np.concatenate([gr.ravel(), gl.ravel()]), np.concatenate([num_r.ravel(), num_l.ravel()])
    assert np.linalg.norm(g - n) / np.linalg.norm(n) < 1e-6


def test_pair_distances():
    d = pair_distances([AnchorPair(0, 0, 0.0, 1.0)], [[0.0, 0.0, 0.0]], [[0.0, 0.003, 0.004]])
    assert d == pytest.approx([0.005])
    assert pair_distances([], np.zeros((1, 3)), np.zeros((1, 3))).size == 0
