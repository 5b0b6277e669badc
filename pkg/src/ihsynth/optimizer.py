"""Adam refinement of augmented pose pairs, validity filtering and batch runs."""

from __future__ import annotations

import csv
import multiprocessing as mp
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import orthonormalize
from .hand_model import forward_kinematics, skin_vertices
from .losses import HAND_PARAMS, N_PARAMS, TERMS, LossWeights, Objective, apply_params, pack_pair
from .pose_synthesis import (
    DEFAULT_LIMITS, AugmentationConfig, ConfigurationError, JointLimits, PosePair, augment_pose, check_limits,
    clamp_pose,
)
from .sdf import PosedHand, max_penetration


class DivergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else trace


@dataclass(frozen=True)
class Schedule:
    iterations: int = 215
    lr: float = 0.01
    ramp_end: int = 165
    attraction: tuple = (0.1, 2.0)     # w1, ramped up
    anatomic: float = 5.0              # w2
    adversarial: float = 0.5           # w3
    penetration: tuple = (10.0, 1.0)   # w4, ramped down
    rebuild_every: int = 40
    patience: int = 20
    lr_decay: float = 0.5
    translation_scale: float = 0.1   # meters per optimizer unit of root translation

    def validate(self):
        if self.iterations < 1 or self.lr <= 0 or self.rebuild_every < 1 or self.patience < 1:
            raise ConfigurationError("schedule needs iterations, lr, rebuild interval and patience > 0")
        if not 0 < self.lr_decay <= 1 or self.translation_scale <= 0:
            raise ConfigurationError("lr_decay must be in (0, 1] and translation_scale > 0")
        if not 0 <= self.ramp_end <= self.iterations:
            raise ConfigurationError("ramp_end must lie in [0, iterations]")
        if min(*self.attraction, *self.penetration, self.anatomic, self.adversarial) < 0:
            raise ConfigurationError("loss weights must be non-negative")

    def weights(self, it: int) -> LossWeights:
        s = min(1.0, it / self.ramp_end) if self.ramp_end > 0 else 1.0
        w1 = self.attraction[0] + s * (self.attraction[1] - self.attraction[0])
        w4 = self.penetration[0] + s * (self.penetration[1] - self.penetration[0])
        return LossWeights(w1, self.anatomic, self.adversarial, w4)


def _update_mask():
    """1 for parameters the optimizer moves: bend everywhere, splay at finger roots, roots."""
    m = np.zeros((15, 3))
    m[:, 0] = 1.0
    m[::3, 1] = 1.0
    hand = np.concatenate([m.reshape(45), np.ones(6)])
    return np.concatenate([hand, hand])


UPDATE_MASK = _update_mask()


def _translation_slots():
    s = np.zeros(N_PARAMS, dtype=bool)
    for h in (0, 1):
        s[h * HAND_PARAMS + 48:h * HAND_PARAMS + 51] = True
    return s


TRANSLATION = _translation_slots()


@dataclass
class AdamState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    v: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1 ** self.t)
        vh = self.v / (1 - self.beta2 ** self.t)
        return -lr * mh / (np.sqrt(vh) + self.eps)


TRACE_FIELDS = ("iteration", "lr", "total") + TERMS + ("pairs", "grad_norm")


@dataclass
class OptimizeResult:
    pair: PosePair
    trace: list
    seconds: float

    def write_trace(self, path):
        write_trace(path, self.trace)


def _fold(x, base: PosePair):
    """Absorb the rotation tangents into the base pose and re-project the root
    rotations onto SO(3); returns (x, base)."""
    pair = apply_params(x, base)
    for pose in pair.hands():
        pose.root_rotation = orthonormalize(pose.root_rotation)
    x = x.copy()
    x[45:48] = 0.0
    x[HAND_PARAMS + 45:HAND_PARAMS + 48] = 0.0
    return x, pair


def optimize_pair(pair: PosePair, objective: Objective, schedule: Schedule = Schedule(),
                  fixed_pairs=None) -> OptimizeResult:
    """Refine one pair; the result is clamped to the joint limits.

    ``fixed_pairs`` replaces the scheduled anchor-pair rebuilds with a
    constant list of pairs.
    """
    schedule.validate()
    start = time.perf_counter()
    base = pair.copy()
    x = pack_pair(base)
    scale = np.where(TRANSLATION, schedule.translation_scale, 1.0)
    adam = AdamState()
    lr = schedule.lr
    history = []    # unweighted terms of the iterates since the last rebuild
    stale = 0
    frozen = None
    trace = []
    for it in range(schedule.iterations):
        if it % schedule.rebuild_every == 0:
            frozen = objective.freeze(apply_params(x, base), pairs=fixed_pairs is None)
            if fixed_pairs is not None:
                frozen.pairs = list(fixed_pairs)
            history = []
        weights = schedule.weights(it)
        total, grad, terms = objective.evaluate(x, base, frozen, weights)
        if not (np.isfinite(total) and np.all(np.isfinite(grad))):
            raise DivergenceError(f"non-finite loss or gradient at iteration {it}", trace)
        grad = grad * UPDATE_MASK
        trace.append({"iteration": it, "lr": lr, "total": total, **terms, "pairs": len(frozen.pairs),
                      "grad_norm": float(np.linalg.norm(grad))})
        # plateau test under the current weights, which ramp every iteration
        w = weights.as_array()
        best = min((float(w @ h) for h in history), default=np.inf)
        history.append(np.array([terms[k] for k in TERMS]))
        if total < best - 1e-12:
            stale = 0
        else:
            stale += 1
            if stale >= schedule.patience:
                lr *= schedule.lr_decay
                stale = 0
        # translations are stepped in units of ``translation_scale`` meters
        x = x + adam.step(grad * scale, lr) * scale
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite parameters after iteration {it}", trace)
        x, base = _fold(x, base)
    out = apply_params(x, base)
    out = PosePair(clamp_pose(out.right, objective.limits), clamp_pose(out.left, objective.limits),
                   pair.seed_id, pair.aug_index)
    return OptimizeResult(out, trace, time.perf_counter() - start)


# ---------------------------------------------------------------- validity

@dataclass
class Validity:
    valid: bool
    penetration: float          # meters, brute force
    violations: list


def posed_hands(pair: PosePair, objective: Objective):
    out = []
    for model, pose in zip(objective.models(), pair.hands()):
        kin = forward_kinematics(model, pose)
        out.append(PosedHand(skin_vertices(model, kin), model.part_faces, kin.world))
    return out


def validity_filter(pair: PosePair, objective: Objective, tolerance: float = 0.002,
                    limits: JointLimits | None = None) -> Validity:
    """Keep a pair whose deepest cross-hand penetration is within ``tolerance``
    meters and whose angles all lie inside the joint limits."""
    limits = objective.limits if limits is None else limits
    right, left = posed_hands(pair, objective)
    depth = max_penetration(left, right)
    violations = check_limits(pair.right, limits) + check_limits(pair.left, limits)
    return Validity(bool(depth <= tolerance and not violations), depth, violations)


# ---------------------------------------------------------------- batches

@dataclass
class BatchRecord:
    pair: PosePair
    initial: PosePair
    validity: Validity
    seconds: float
    final_terms: dict
    error: str | None = None
    trace: list | None = None


@dataclass
class BatchResult:
    records: list
    seconds: float

    @property
    def kept(self):
        return [r for r in self.records if r.validity.valid]

    @property
    def yield_rate(self):
        """Fraction kept; None for an empty batch."""
        return len(self.kept) / len(self.records) if self.records else None

    def stats(self):
        depth = np.array([r.validity.penetration for r in self.records if r.error is None])
        return {"pairs": len(self.records), "kept": len(self.kept), "yield": self.yield_rate,
                "diverged": sum(r.error is not None for r in self.records),
                "seconds": self.seconds, "max_penetration_mm": float(depth.max(initial=0.0) * 1000),
                "mean_seconds_per_pair": float(np.mean([r.seconds for r in self.records])) if self.records else 0.0}


_WORKER = {}


def _init_worker(objective, schedule, tolerance, keep_traces=False):
    _WORKER.update(objective=objective, schedule=schedule, tolerance=tolerance, keep_traces=keep_traces)


def _run_one(pair):
    obj, sched, tol = _WORKER["objective"], _WORKER["schedule"], _WORKER["tolerance"]
    try:
        res = optimize_pair(pair, obj, sched)
    except DivergenceError as exc:
        return BatchRecord(pair, pair, Validity(False, float("nan"), []), 0.0, {}, str(exc),
                           exc.trace if _WORKER["keep_traces"] else None)
    validity = validity_filter(res.pair, obj, tol)
    return BatchRecord(res.pair, pair, validity, res.seconds, {k: res.trace[-1][k] for k in TERMS}, None,
                       res.trace if _WORKER["keep_traces"] else None)


def augment_seeds(seeds, cfg: AugmentationConfig, limits: JointLimits = DEFAULT_LIMITS):
    """Augmented pairs for every seed; seed k draws from its own stream."""
    out = []
    for k, seed_pair in enumerate(seeds):
        rng = np.random.default_rng([cfg.seed, k])
        out.extend(augment_pose(seed_pair, cfg, limits, rng))
    return out


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        w.writeheader()
        w.writerows(trace)


def run_batch(pairs, objective: Objective, schedule: Schedule = Schedule(), workers: int = 1,
              tolerance: float = 0.002, keep_traces: bool = False) -> BatchResult:
    """Optimize and filter ``pairs``.  The result does not depend on ``workers``.

    A pair whose optimization diverges is recorded as failed with its error
    message; the rest of the batch still runs.
    """
    pairs = list(pairs)
    start = time.perf_counter()
    args = (objective, schedule, tolerance, keep_traces)
    if workers <= 1 or len(pairs) <= 1:
        _init_worker(*args)
        records = [_run_one(p) for p in pairs]
    else:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with ctx.Pool(workers, initializer=_init_worker, initargs=args) as pool:
            records = pool.map(_run_one, pairs, chunksize=1)
    return BatchResult(records, time.perf_counter() - start)


__all__ = [
    "AdamState", "BatchRecord", "BatchResult", "DivergenceError", "OptimizeResult", "Schedule", "TRACE_FIELDS",
    "UPDATE_MASK", "Validity", "augment_seeds", "optimize_pair", "posed_hands", "run_batch",
    "validity_filter", "write_trace",
]
