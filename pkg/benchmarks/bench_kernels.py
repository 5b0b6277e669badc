"""Compiled kernels vs the numpy fallback on hand-sized workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each row reports the best of N wall-clock timings per backend, the speedup,
and the largest absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from ihsynth import kernels
from ihsynth.hand_model import HandPose, build_canonical_hand, forward_kinematics, skin_vertices
from ihsynth.sdf import build_sdf


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads():
    right = build_canonical_hand("right")
    left = build_canonical_hand("left")
    pose = HandPose("left", np.zeros((15, 3)), np.eye(3), [0.02, 0.0, 0.0])
    v_left = skin_vertices(left, forward_kinematics(left, pose))
    palm = left.part_faces[0]
    tris = np.ascontiguousarray(v_left[palm])
    pts = np.ascontiguousarray(right.vertices)
    grid = build_sdf(v_left, palm, 32)
    frame = np.eye(4)[:3]

    def lazy():
        return build_sdf(v_left, palm, 32, lazy=True)

    yield "signed_distance (1136 pts x palm)", lambda mod: mod.signed_distance(pts, tris)
    yield "unsigned_distance (1136 pts x palm)", lambda mod: mod.unsigned_distance(pts, tris)
    axes = [np.arange(n) for n in grid.values.shape]
    nodes = grid.origin + np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3) * grid.spacing
    yield f"grid fill ({len(nodes)} nodes)", lambda mod: mod.signed_distance(nodes, tris)

    def query(mod):
        g = lazy()
        return mod.grid_query(g.values, g.origin, g.spacing, pts, g.triangles)[0]

    yield "grid_query, cold lazy grid", query

    def rigid(mod):
        g = lazy()
        gp = np.zeros_like(pts)
        return np.array([mod.rigid_grid_query(g.values, g.origin, g.spacing, frame, pts, g.triangles, gp)[0]])

    yield "rigid_grid_query, cold lazy grid", rigid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the fallback can be timed")
    print(f"{'workload':<38} {'cython s':>10} {'numpy s':>10} {'speedup':>8} {'max diff':>10}")
    for name, run in workloads():
        t_fast, a = best_of(lambda: run(kernels), args.repeat)
        t_slow, b = best_of(lambda: run(kernels.fallback), args.repeat)
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{name:<38} {t_fast:>10.4f} {t_slow:>10.4f} {t_slow / t_fast:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
