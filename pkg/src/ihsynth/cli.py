"""Command-line driver: one subcommand per pipeline stage plus ``run-all``.

Exit codes: 0 success, 1 other failure, 2 configuration, 3 input/output,
4 optimizer divergence, 5 degenerate geometry.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import metrics
from .config import PipelineConfig
from .geometry import DegenerateGeometryError, FileFormatError
from .hand_model import InvalidProportionsError, build_canonical_hand, forward_kinematics, skin_vertices
from .optimizer import DivergenceError
from .pipeline import Pipeline
from .pose_synthesis import ConfigurationError, PosePair
from .scene import ANNOTATION_FORMAT, MANIFEST_FORMAT, CameraParams

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_DEGENERATE = 5

OUT_ENV = "IHSYNTH_OUT"
PREDICTIONS_FORMAT = "ihsynth-predictions"

log = logging.getLogger("ihsynth")


def _parse_set(items):
    """``a.b=value`` pairs into a nested override dict; values are read as YAML."""
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _merge_into(dst, src):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge_into(dst[k], v)
        else:
            dst[k] = v
    return dst


def load_config(args) -> PipelineConfig:
    overrides = _parse_set(getattr(args, "set", None))
    flags = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.workers is not None:
        flags["workers"] = args.workers
    if getattr(args, "tolerance_mm", None) is not None:
        flags["filter"] = {"tolerance_mm": args.tolerance_mm}
    if getattr(args, "cameras", None) is not None:
        flags["rig"] = {"cameras": args.cameras}
    return PipelineConfig.load(args.config, _merge_into(overrides, flags))


def output_dir(args, cfg: PipelineConfig) -> Path:
    """``--out`` wins over the environment variable, which wins over the config."""
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg["paths"]["out_dir"])


# ------------------------------------------------------------------- eval

def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc


def _documents(path):
    """Annotation or prediction documents at ``path`` (a file or an export directory)."""
    path = Path(path)
    if path.is_dir():
        manifest = _load_json(path / "manifest.json")
        if manifest.get("format") != MANIFEST_FORMAT:
            raise FileFormatError(f"{path}: manifest has the wrong format tag")
        return [_load_json(path / f["name"]) for f in manifest["files"]]
    return [_load_json(path)]


def _camera_vertices(pose: PosePair, camera: CameraParams, models):
    verts = [skin_vertices(m, forward_kinematics(m, p)) for m, p in zip(models, pose.hands())]
    return np.stack([v @ camera.rotation.T + camera.translation for v in verts])


def load_views(path, models, with_vertices: bool = True) -> dict:
    """Map (pair_index, camera_index) -> (joints (2, 21, 3), vertices or None), meters, camera frame.

    Accepts export directories, single annotation documents and the
    predictions-only format (``{"format": "ihsynth-predictions",
    "predictions": [{"pair_index", "camera_index", "joints_3d"[, "vertices"]}]}``).
    """
    views = {}
    for doc in _documents(path):
        fmt = doc.get("format")
        if fmt == ANNOTATION_FORMAT:
            pose = PosePair.from_dict(doc["pose"])
            for v in doc["views"]:
                verts = _camera_vertices(pose, CameraParams.from_dict(v["camera"]), models) if with_vertices else None
                views[(int(doc["pair_index"]), int(v["camera_index"]))] = (np.array(v["joints_3d"], dtype=float), verts)
        elif fmt == PREDICTIONS_FORMAT:
            for p in doc["predictions"]:
                verts = np.array(p["vertices"], dtype=float) if p.get("vertices") is not None else None
                views[(int(p["pair_index"]), int(p["camera_index"]))] = (np.array(p["joints_3d"], dtype=float), verts)
        else:
            raise FileFormatError(f"{path}: unknown document format {fmt!r}")
    return views


def evaluate_files(pred_path, gt_path, root: int = metrics.MIDDLE_MCP, contact_mm: float = 3.0, models=None):
    """Metrics report (millimeters) over the views present in both inputs."""
    models = models or (build_canonical_hand("right"), build_canonical_hand("left"))
    gt = load_views(gt_path, models)
    pred = load_views(pred_path, models)
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise FileFormatError(f"{len(missing)} ground-truth views have no prediction, first {missing[0]}")
    samples = []
    for key in sorted(gt):
        gj, gv = gt[key]
        pj, pv = pred[key]
        has_verts = gv is not None and pv is not None
        samples.append(metrics.EvalSample(pj * 1000.0, gj * 1000.0, pv * 1000.0 if has_verts else None,
                                          gv * 1000.0 if has_verts else None, f"pair{key[0]}/cam{key[1]}"))
    return metrics.evaluate(samples, root, contact_mm)


# ---------------------------------------------------------------- commands

def cmd_print_config(args):
    sys.stdout.write(load_config(args).to_yaml())


def cmd_stage(args):
    cfg = load_config(args)
    pipe = Pipeline(cfg, output_dir(args, cfg))
    stage = args.command
    if stage == "gen-poses":
        seeds, initial = pipe.gen_poses()
        log.info("%d seeds, %d augmented pairs", len(seeds), len(initial))
    elif stage == "select-anchors":
        log.info("%d anchors", len(pipe.select_anchors()))
    elif stage == "train-disc":
        _, report = pipe.train_discriminator()
        if report.get("heldout_auc") is not None:
            log.info("held-out AUC %.3f", report["heldout_auc"])
    elif stage == "optimize":
        _optimize(pipe, args.traces)
    elif stage == "filter":
        _, stats = pipe.filter()
        log.info("kept %d of %d pairs (yield %s)", stats["kept"], stats["pairs"], stats["yield"])
    elif stage == "export":
        res = pipe.export(args.cameras)
        log.info("%d records -> %s", res.records, res.manifest_path)
    elif stage == "run-all":
        pipe.gen_poses()
        pipe.select_anchors()
        pipe.train_discriminator()
        _optimize(pipe, False)
        _, stats = pipe.filter()
        log.info("kept %d of %d pairs (yield %s)", stats["kept"], stats["pairs"], stats["yield"])
        res = pipe.export(args.cameras)
        log.info("%d records -> %s", res.records, res.manifest_path)


def _optimize(pipe: Pipeline, traces: bool):
    result = pipe.optimize(traces)
    stats = result.stats()
    log.info("optimized %d pairs in %.1f s, %d diverged", stats["pairs"], stats["seconds"], stats["diverged"])
    if result.records and stats["diverged"] == stats["pairs"]:
        raise DivergenceError("every pair diverged")


def cmd_eval(args):
    gt = args.gt
    if gt is None:
        cfg = load_config(args)
        gt = output_dir(args, cfg)
    report = evaluate_files(args.pred, gt, args.root, args.contact_mm)
    sys.stdout.write(metrics.format_report(report))
    if args.report:
        metrics.write_report(report, args.report)


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults are used when omitted)")
    common.add_argument("--seed", type=int, help="override the random seed")
    common.add_argument("--workers", type=int, help="worker processes for the optimizer")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key, e.g. schedule.lr=0.005 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ihsynth", description="Two-hand interaction pose synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-poses": "build seed pairs and their augmentations",
        "select-anchors": "pick contact anchors from the augmented pairs",
        "train-disc": "train the naturalness discriminator",
        "optimize": "refine every augmented pair",
        "filter": "keep pairs without penetration or limit violations",
        "export": "write camera-rig annotations for the filtered library",
        "run-all": "every stage in order",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=cmd_stage)
        if name in ("filter", "run-all", "optimize"):
            p.add_argument("--tolerance-mm", type=float, help="penetration tolerance of the filter")
        if name in ("export", "run-all"):
            p.add_argument("--cameras", choices=("sparse", "full"), help="10 sampled or all 40 cameras per pair")
        if name == "optimize":
            p.add_argument("--traces", action="store_true", help="write per-pair loss traces as CSV")

    p = sub.add_parser("eval", parents=[common], help="pose-estimation metrics against exported ground truth")
    p.add_argument("--pred", required=True, help="predictions: export directory, annotation or predictions file")
    p.add_argument("--gt", help="ground truth (defaults to the output directory)")
    p.add_argument("--root", type=int, default=metrics.MIDDLE_MCP,
                   help=f"root keypoint for alignment ({metrics.MIDDLE_MCP} middle MCP, {metrics.WRIST} wrist)")
    p.add_argument("--contact-mm", type=float, default=3.0, help="ground-truth contact distance for CDev")
    p.add_argument("--report", help="write <REPORT>.txt and <REPORT>.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("print-config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (ConfigurationError, InvalidProportionsError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (OSError, FileFormatError, KeyError) as exc:
        log.error("input/output error: %s", exc)
        return EXIT_IO
    except DivergenceError as exc:
        log.error("optimizer diverged: %s", exc)
        return EXIT_DIVERGENCE
    except DegenerateGeometryError as exc:
        log.error("degenerate geometry: %s", exc)
        return EXIT_DEGENERATE
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
