import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ihsynth.discriminator import (
    LAYER_SIZES, RHO_MAX, MlpParams, adversarial_loss, auc, init_params, label_probability, mse_loss, predict, train,
)
from ihsynth.geometry import FileFormatError
from ihsynth.hand_model import HandPose
from ihsynth.pose_synthesis import ROOT_ROWS, AugmentationConfig, ConfigurationError, sample_offsets


def constant_net(value_logit=0.0):
    p = init_params(np.random.default_rng(0))
    p.weights[-1][:] = 0.0
    p.biases[-1][:] = value_logit
    return p


def test_layer_sizes():
    p = init_params(np.random.default_rng(0))
    assert p.sizes == LAYER_SIZES == (45, 128, 128, 64, 1)


def test_labels():
    assert label_probability(np.zeros((15, 3))) == 1.0
    top = np.zeros((15, 3))
    top[:, 0] = np.pi / 2
    top[ROOT_ROWS, 1] = np.pi / 6
    assert label_probability(top) == pytest.approx(0.0, abs=1e-12)
    assert RHO_MAX == pytest.approx(np.linalg.norm(top))
    # labels only fall with the offset size and stay within [0, 1]
    rng = np.random.default_rng(1)
    offs = np.stack([sample_offsets(rng, AugmentationConfig()) for _ in range(200)])
    p = label_probability(offs)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(label_probability(offs * 0.5) >= p)


def test_initial_loss_on_balanced_hard_labels():
    p = constant_net()
    rng = np.random.default_rng(2)
    x = rng.normal(size=(100, 45))
    y = np.repeat([0.0, 1.0], 50)
    assert mse_loss(p, x, y)[0] == pytest.approx(0.25, abs=1e-12)


@settings(max_examples=30)
@given(arrays(np.float64, 45, elements=st.floats(-1e3, 1e3)))
def test_output_strictly_inside_unit_interval(x):
    p = init_params(np.random.default_rng(3))
    d = predict(p, x)
    assert 0.0 < d < 1.0
    assert predict(p, x) == d


def test_adversarial_loss_values():
    assert adversarial_loss(constant_net(0.0), np.zeros(45))[0] == pytest.approx(0.25, abs=1e-15)
    # logit at the clip limit: output is within 1e-15 of 1
    assert adversarial_loss(constant_net(60.0), np.zeros(45))[0] < 1e-30
    assert adversarial_loss(constant_net(0.0), HandPose("right"))[0] == pytest.approx(0.25)


def test_adversarial_gradient_finite_differences():
    p = init_params(np.random.default_rng(4))
    x = np.random.default_rng(5).normal(0, 0.5, 45)
    _, g = adversarial_loss(p, x)
    h = 1e-6
    num = np.array([(adversarial_loss(p, x + h * e)[0] - adversarial_loss(p, x - h * e)[0]) / (2 * h)
                    for e in np.eye(45)])
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_weight_gradient_finite_differences():
    p = init_params(np.random.default_rng(6))
    rng = np.random.default_rng(7)
    x, y = rng.normal(size=(16, 45)), rng.uniform(size=16)
    _, dws, dbs = mse_loss(p, x, y)
    h = 1e-6
    for layer in range(len(p.weights)):
        for idx in [(0, 0), (3, 0), (10, 0)]:
            if idx[0] >= p.weights[layer].shape[0]:
                continue
            q1, q2 = p.copy(), p.copy()
            q1.weights[layer][idx] += h
            q2.weights[layer][idx] -= h
            num = (mse_loss(q1, x, y)[0] - mse_loss(q2, x, y)[0]) / (2 * h)
            assert dws[layer][idx] == pytest.approx(num, rel=1e-5, abs=1e-10)
        q1, q2 = p.copy(), p.copy()
        q1.biases[layer][0] += h
        q2.biases[layer][0] -= h
        num = (mse_loss(q1, x, y)[0] - mse_loss(q2, x, y)[0]) / (2 * h)
        assert dbs[layer][0] == pytest.approx(num, rel=1e-5, abs=1e-10)


def test_training_separates_held_out_poses(trained_disc):
    result, natural, perturbed, labels = trained_disc
    assert result.losses[-1] < result.losses[0]
    heavy = perturbed[labels < 0.5]
    assert len(heavy) > 20
    assert auc(predict(result.params, natural), predict(result.params, heavy)) >= 0.9
    assert np.median(predict(result.params, natural)) > 0.5
    assert predict(result.params, np.zeros(45)) > 0.5


def test_shuffled_labels_carry_no_signal():
    """Targets independent of the inputs: held-out ranking averages to chance."""
    scores = []
    for seed in range(4):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 0.5, (600, 45))
        y = rng.permutation(np.repeat([0.0, 1.0], 300))
        fit, hold = slice(0, 400), slice(400, None)
        res = train(init_params(rng), x[fit][y[fit] == 1], x[fit][y[fit] == 0], np.zeros((y[fit] == 0).sum()),
                    epochs=5, rng=rng)
        s = predict(res.params, x[hold])
        scores.append(auc(s[y[hold] == 1], s[y[hold] == 0]))
    assert abs(np.mean(scores) - 0.5) < 0.1


def test_auc_oracle():
    assert auc([1.0, 2.0], [0.0]) == 1.0
    assert auc([0.0], [1.0]) == 0.0
    assert auc([1.0], [1.0]) == 0.5


def test_empty_corpus_rejected():
    with pytest.raises(ConfigurationError):
        train(init_params(np.random.default_rng(0)), np.zeros((0, 45)), np.zeros((3, 45)), np.zeros(3))


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 45))
        return train(init_params(rng), x[:20], x[20:], np.zeros(20), epochs=2, rng=rng).params.flat()
    assert np.array_equal(run(), run())


def test_binary_round_trip(tmp_path):
    p = init_params(np.random.default_rng(9))
    p.save(tmp_path / "d.bin")
    q = MlpParams.load(tmp_path / "d.bin")
    assert np.array_equal(p.flat(), q.flat())
    data = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(data[:-10])
    with pytest.raises(FileFormatError):
        MlpParams.load(tmp_path / "short.bin")
    (tmp_path / "junk.bin").write_bytes(b"hello")
    with pytest.raises(FileFormatError):
        MlpParams.load(tmp_path / "junk.bin")
