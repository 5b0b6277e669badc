"""Two-hand pose-estimation metrics.

Joint arrays are shaped (2, 21, 3) in millimeters, right hand first, using
the 21-keypoint layout of ``hand_model`` (wrist, then root, middle, end
joint and tip per finger).  Mesh arrays are (2, V, 3), also in millimeters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DegenerateGeometryError
from .hand_model import KEYPOINT_PARENTS, MIDDLE_MCP

WRIST = 0
METRICS = ("mpjpe", "pampjpe", "smpjpe", "mrrpe", "cdev")


class DegenerateAlignmentError(DegenerateGeometryError):
    pass


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim != 3 or pred.shape[0] != 2 or pred.shape[2] != 3:
        raise ValueError(f"expected (2, J, 3) arrays for two hands, got {pred.shape}")
    return pred, gt


def mpjpe(pred, gt, root: int = MIDDLE_MCP) -> float:
    """Mean joint error after translating each hand so its roots coincide."""
    pred, gt = _pair(pred, gt)
    a = pred - pred[:, root:root + 1]
    b = gt - gt[:, root:root + 1]
    return float(np.mean(np.linalg.norm(a - b, axis=-1)))


def similarity_align(src, dst, scale: bool = True):
    """Least-squares similarity (s, R, t) taking ``src`` (n, 3) onto ``dst``.

    Closed form via the SVD of the cross-covariance, with a reflection guard.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    var = float(np.sum(xs * xs)) / len(src)
    cov = xd.T @ xs / len(src)
    u, sv, vt = np.linalg.svd(cov)
    if var <= 0.0 or sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateAlignmentError("joints are collinear or coincident; alignment is undetermined")
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rot = u @ np.diag(d) @ vt
    s = float(np.sum(sv * d) / var) if scale else 1.0
    t = mu_d - s * rot @ mu_s
    return s, rot, t


def pampjpe(pred, gt, scale: bool = True) -> float:
    """Mean joint error after per-hand Procrustes alignment of prediction to GT."""
    pred, gt = _pair(pred, gt)
    errs = []
    for p, g in zip(pred, gt):
        s, rot, t = similarity_align(p, g, scale)
        errs.append(np.linalg.norm(s * p @ rot.T + t - g, axis=-1))
    return float(np.mean(errs))


def rescale_bones(pred, gt, parents=KEYPOINT_PARENTS):
    """Prediction with every bone resized to the GT length, directions kept.

    ``pred`` and ``gt`` are (J, 3) for one hand; parents must precede children.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    out = pred.copy()
    for c, p in enumerate(parents):
        if p < 0:
            continue
        bone = pred[c] - pred[p]
        n = np.linalg.norm(bone)
        if n == 0.0:
            raise DegenerateGeometryError(f"predicted bone {p}->{c} has zero length")
        out[c] = out[p] + bone / n * np.linalg.norm(gt[c] - gt[p])
    return out


def smpjpe(pred, gt, root: int = MIDDLE_MCP) -> float:
    """MPJPE after rescaling each predicted bone to its GT length."""
    pred, gt = _pair(pred, gt)
    scaled = np.stack([rescale_bones(p, g) for p, g in zip(pred, gt)])
    return mpjpe(scaled, gt, root)


def mrrpe(pred, gt, root: int = MIDDLE_MCP) -> float:
    """Error of the predicted left-minus-right root offset."""
    pred, gt = _pair(pred, gt)
    rel_p = pred[1, root] - pred[0, root]
    rel_g = gt[1, root] - gt[0, root]
    return float(np.linalg.norm(rel_p - rel_g))


def contact_pairs(verts_right, verts_left, threshold: float):
    """(i, j) index pairs of right/left vertices closer than ``threshold``."""
    tree = cKDTree(np.asarray(verts_left))
    hits = tree.query_ball_point(np.asarray(verts_right), r=threshold)
    pairs = [(i, j) for i, js in enumerate(hits) for j in sorted(js)]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def cdev(pred_verts, gt_verts, threshold: float = 3.0):
    """Contact deviation over the GT contact vertex pairs (right/left pairs
    closer than ``threshold`` mm): mean absolute change of the pair distance
    from GT to prediction.  None when the GT has no contact."""
    pred, gt = _pair(pred_verts, gt_verts)
    pairs = contact_pairs(gt[0], gt[1], threshold)
    if len(pairs) == 0:
        return None
    d_pred = np.linalg.norm(pred[0][pairs[:, 0]] - pred[1][pairs[:, 1]], axis=-1)
    d_gt = np.linalg.norm(gt[0][pairs[:, 0]] - gt[1][pairs[:, 1]], axis=-1)
    return float(np.mean(np.abs(d_pred - d_gt)))


@dataclass
class EvalSample:
    pred_joints: np.ndarray
    gt_joints: np.ndarray
    pred_verts: np.ndarray | None = None
    gt_verts: np.ndarray | None = None
    name: str = ""


def evaluate(samples, root: int = MIDDLE_MCP, contact_threshold: float = 3.0):
    """Per-sample metrics and their means; CDev averages only applicable samples."""
    rows = []
    for s in samples:
        row = {"name": s.name, "mpjpe": mpjpe(s.pred_joints, s.gt_joints, root),
               "pampjpe": pampjpe(s.pred_joints, s.gt_joints),
               "smpjpe": smpjpe(s.pred_joints, s.gt_joints, root),
               "mrrpe": mrrpe(s.pred_joints, s.gt_joints, root), "cdev": None}
        if s.pred_verts is not None and s.gt_verts is not None:
            row["cdev"] = cdev(s.pred_verts, s.gt_verts, contact_threshold)
        rows.append(row)
    summary = {"samples": len(rows), "root": int(root)}
    for m in METRICS:
        vals = [r[m] for r in rows if r[m] is not None]
        summary[m] = float(np.mean(vals)) if vals else None
    summary["cdev_applicable"] = sum(r["cdev"] is not None for r in rows)
    return {"summary": summary, "samples": rows}


def format_report(report) -> str:
    s = report["summary"]
    lines = [f"samples: {s['samples']}  root joint: {s['root']}", "metric     mean (mm)"]
    for m in METRICS:
        v = s[m]
        lines.append(f"{m:<10} {'n/a' if v is None else f'{v:.4f}'}")
    lines.append(f"cdev applicable on {s['cdev_applicable']} of {s['samples']} samples")
    return "\n".join(lines) + "\n"


def write_report(report, path_stem):
    """Text table to ``<stem>.txt`` and the full report to ``<stem>.json``."""
    stem = Path(path_stem)
    stem.with_suffix(".txt").write_text(format_report(report))
    stem.with_suffix(".json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")


__all__ = [
    "DegenerateAlignmentError", "EvalSample", "METRICS", "WRIST", "cdev", "contact_pairs", "evaluate",
    "format_report", "mpjpe", "mrrpe", "pampjpe", "rescale_bones", "similarity_align", "smpjpe", "write_report",
]
