"""Naturalness prior over single-hand articulations.

A 45 -> 128 -> 128 -> 64 -> 1 perceptron with leaky-ReLU hidden layers and a
logistic output.  It is pretrained by soft-label regression and then frozen;
pose optimization only needs its value and input gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import FileFormatError
from .hand_model import HandPose, pose_to_vector
from .pose_synthesis import ROOT_ROWS, ConfigurationError

LAYER_SIZES = (45, 128, 128, 64, 1)
LEAKY_SLOPE = 0.01
MAGIC = b"IHDISC\x00\x01"

# norm of the largest augmentation offset: every bend at 90 deg, every root splay at 30 deg
RHO_MAX = float(np.sqrt(15 * (np.pi / 2) ** 2 + len(ROOT_ROWS) * (np.pi / 6) ** 2))


@dataclass(eq=False)
class MlpParams:
    weights: list     # (in, out) matrices
    biases: list

    @property
    def sizes(self):
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def save(self, path):
        """Flat binary: magic, layer count, layer sizes, then row-major float64 W, b per layer."""
        sizes = self.sizes
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(sizes)))
            fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
            for w, b in zip(self.weights, self.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        if data[:len(MAGIC)] != MAGIC:
            raise FileFormatError(f"{path}: not a discriminator parameter file")
        pos = len(MAGIC)
        try:
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            sizes = struct.unpack_from(f"<{n}I", data, pos)
            pos += 4 * n
            weights, biases = [], []
            for a, b in zip(sizes[:-1], sizes[1:]):
                w = np.frombuffer(data, dtype="<f8", count=a * b, offset=pos).reshape(a, b).astype(np.float64)
                pos += 8 * a * b
                bias = np.frombuffer(data, dtype="<f8", count=b, offset=pos).astype(np.float64)
                pos += 8 * b
                weights.append(w)
                biases.append(bias)
        except (struct.error, ValueError) as exc:
            raise FileFormatError(f"{path}: truncated discriminator parameter file") from exc
        if pos != len(data):
            raise FileFormatError(f"{path}: trailing bytes after parameters")
        return cls(weights, biases)


def init_params(rng: np.random.Generator, sizes=LAYER_SIZES) -> MlpParams:
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))
        biases.append(np.zeros(b))
    return MlpParams(weights, biases)


def _sigmoid(z):
    # clipped so the output stays strictly inside (0, 1) in float64
    return 1.0 / (1.0 + np.exp(-np.clip(z, -36.0, 36.0)))


def _forward(params: MlpParams, x):
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = _sigmoid(z) if i == last else np.where(z > 0, z, LEAKY_SLOPE * z)
        acts.append(h)
    return acts, pre


def _backward(params: MlpParams, acts, pre, dout, need_weights=True):
    """Back-propagate dL/d(output) (B, 1); returns (input grad, weight grads, bias grads)."""
    last = len(params.weights) - 1
    delta = dout * acts[-1] * (1.0 - acts[-1])
    dws, dbs = [], []
    for i in range(last, -1, -1):
        if need_weights:
            dws.append(acts[i].T @ delta)
            dbs.append(delta.sum(axis=0))
        dh = delta @ params.weights[i].T
        if i > 0:
            delta = dh * np.where(pre[i - 1] > 0, 1.0, LEAKY_SLOPE)
    return dh, dws[::-1], dbs[::-1]


def predict(params: MlpParams, x):
    """Naturalness in (0, 1) for one 45-vector or a batch (B, 45)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = _forward(params, x.reshape(-1, params.sizes[0]))[0][-1][:, 0]
    return float(out[0]) if single else out


def adversarial_loss(params: MlpParams, pose):
    """(D(theta) - 1)^2 and its gradient w.r.t. the 45 articulation angles.

    Angle vectors share one convention for both sides (left frames are the
    mirror conjugates of the right ones), so no side handling is needed.
    """
    x = pose_to_vector(pose) if isinstance(pose, HandPose) else np.asarray(pose, dtype=np.float64)
    acts, pre = _forward(params, x.reshape(1, -1))
    d = acts[-1][0, 0]
    dx, _, _ = _backward(params, acts, pre, np.array([[2.0 * (d - 1.0)]]), need_weights=False)
    return float((d - 1.0) ** 2), dx[0]


def mse_loss(params: MlpParams, x, target):
    """Mean squared error to soft targets, with weight and bias gradients."""
    acts, pre = _forward(params, x)
    out = acts[-1][:, 0]
    err = out - target
    loss = float(np.mean(err ** 2))
    _, dws, dbs = _backward(params, acts, pre, (2.0 * err / len(err))[:, None])
    return loss, dws, dbs


def label_probability(offsets, rho_max: float = RHO_MAX):
    """Soft naturalness label from the joint-angle offsets that produced a pose.

    1 for no offset, falling linearly with the offset norm to 0 at ``rho_max``.
    """
    offsets = np.abs(np.asarray(offsets, dtype=np.float64))
    if offsets.ndim > 1 and offsets.shape[-2:] == (15, 3):
        offsets = offsets.reshape(offsets.shape[:-2] + (45,))
    return np.maximum(0.0, 1.0 - np.linalg.norm(offsets, axis=-1) / rho_max)


@dataclass
class TrainResult:
    params: MlpParams
    losses: list = field(default_factory=list)


def train(params: MlpParams, natural, perturbed, perturbed_labels, epochs: int = 60, lr: float = 1e-3,
          batch_size: int = 64, rng: np.random.Generator | None = None) -> TrainResult:
    """Mini-batch Adam on squared error: natural targets 1, perturbed targets p_n."""
    natural = np.asarray(natural, dtype=np.float64).reshape(-1, params.sizes[0])
    perturbed = np.asarray(perturbed, dtype=np.float64).reshape(-1, params.sizes[0])
    if len(natural) == 0 or len(perturbed) == 0:
        raise ConfigurationError("both training corpora must be non-empty")
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.vstack([natural, perturbed])
    y = np.concatenate([np.ones(len(natural)), np.asarray(perturbed_labels, dtype=np.float64)])
    p = params.copy()
    m = [np.zeros_like(a) for a in p.weights + p.biases]
    v = [np.zeros_like(a) for a in p.weights + p.biases]
    step = 0
    losses = []
    for _ in range(int(epochs)):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            loss, dws, dbs = mse_loss(p, x[idx], y[idx])
            total += loss * len(idx)
            step += 1
            for k, (arr, g) in enumerate(zip(p.weights + p.biases, dws + dbs)):
                m[k] = 0.9 * m[k] + 0.1 * g
                v[k] = 0.999 * v[k] + 0.001 * g * g
                arr -= lr * (m[k] / (1 - 0.9 ** step)) / (np.sqrt(v[k] / (1 - 0.999 ** step)) + 1e-8)
        losses.append(total / len(x))
    return TrainResult(p, losses)


def auc(scores_pos, scores_neg):
    """Area under the ROC curve via the rank statistic (ties count one half)."""
    pos = np.asarray(scores_pos)[:, None]
    neg = np.asarray(scores_neg)[None, :]
    return float(np.mean((pos > neg) + 0.5 * (pos == neg)))


__all__ = [
    "LAYER_SIZES", "MlpParams", "RHO_MAX", "TrainResult", "adversarial_loss", "auc", "init_params",
    "label_probability", "mse_loss", "predict", "train",
]
