"""Pipeline stages shared by the command line and the end-to-end tests.

Every stage reads and writes plain files under one output directory:

    seeds.json          seed pose pairs
    initial.json        augmented (un-optimized) pairs
    anchors.json        anchor set
    discriminator.bin   trained naturalness prior
    optimized.json      optimized pairs, one per initial pair
    library.json        pairs that pass the validity filter
    filter_report.json  yield and per-pair diagnostics
    annotations/, manifest.json

Stage outputs depend only on the configuration (not on timing or worker
count), so reruns are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import discriminator as disc
from .anchors import AnchorSet, select_anchors
from .config import PipelineConfig
from .geometry import FileFormatError
from .hand_model import Proportions, build_canonical_hand, forward_kinematics, skin_vertices
from .losses import Objective
from .optimizer import BatchResult, augment_seeds, run_batch, validity_filter, write_trace
from .pose_synthesis import PosePair, sample_offsets
from .scene import export_annotations
from .seeds import natural_corpus, seed_library

POSES_FORMAT = "ihsynth-poses"

# independent random streams per stage
_STREAM = {"discriminator": 1, "export": 2}


def save_pairs(path, pairs, extra: dict | None = None):
    doc = {"format": POSES_FORMAT, "version": 1, "pairs": [p.to_dict() for p in pairs]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def load_pairs(path) -> list[PosePair]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != POSES_FORMAT:
        raise FileFormatError(f"{path}: not a pose-pair file")
    return [PosePair.from_dict(d) for d in doc["pairs"]]


def _dump_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


class Pipeline:
    def __init__(self, cfg: PipelineConfig, out_dir=None):
        self.cfg = cfg
        self.out = Path(out_dir if out_dir is not None else cfg["paths"]["out_dir"])
        props = cfg["paths"]["proportions"]
        proportions = Proportions.load(props) if props else None
        self.models = (build_canonical_hand("right", proportions), build_canonical_hand("left", proportions))

    def path(self, name):
        return self.out / name

    def _prepare(self):
        self.out.mkdir(parents=True, exist_ok=True)

    # ---------------------------------------------------------------- stages
    def gen_poses(self):
        self._prepare()
        src = self.cfg["paths"]["seeds"]
        if src:
            seeds = load_pairs(src)
        else:
            s = self.cfg["seeds"]
            seeds = seed_library(int(s["count"]), int(self.cfg["seed"]), float(s["contact_gap_m"]))
        initial = augment_seeds(seeds, self.cfg.augmentation(), self.cfg.limits())
        save_pairs(self.path("seeds.json"), seeds)
        save_pairs(self.path("initial.json"), initial)
        return seeds, initial

    def select_anchors(self):
        self._prepare()
        if self.cfg["paths"]["anchors"]:
            anchors = AnchorSet.load(self.cfg["paths"]["anchors"])
        else:
            right, left = self.models
            corpus = [(skin_vertices(right, forward_kinematics(right, p.right)),
                       skin_vertices(left, forward_kinematics(left, p.left)))
                      for p in load_pairs(self.path("initial.json"))]
            a = self.cfg["anchors"]
            anchors = select_anchors(right, left, corpus, int(a["count"]), float(a["threshold_m"]))
        anchors.save(self.path("anchors.json"))
        return anchors

    def train_discriminator(self):
        self._prepare()
        if self.cfg["paths"]["discriminator"]:
            params = disc.MlpParams.load(self.cfg["paths"]["discriminator"])
            params.save(self.path("discriminator.bin"))
            return params, {}
        d = self.cfg["discriminator"]
        rng = np.random.default_rng([int(self.cfg["seed"]), _STREAM["discriminator"]])
        aug = self.cfg.augmentation()
        limits = self.cfg.limits()
        natural = natural_corpus(int(d["natural"]), rng, float(d["jitter_deg"]))
        base = natural_corpus(int(d["perturbed"]), rng, float(d["jitter_deg"])).reshape(-1, 15, 3)
        offsets = np.stack([sample_offsets(rng, aug) for _ in range(len(base))])
        perturbed = np.clip(base + offsets, limits.lower, limits.upper).reshape(-1, 45)
        labels = disc.label_probability(offsets)
        n_nat, n_pert = int(0.8 * len(natural)), int(0.8 * len(perturbed))
        result = disc.train(disc.init_params(rng), natural[:n_nat], perturbed[:n_pert], labels[:n_pert],
                            int(d["epochs"]), float(d["lr"]), int(d["batch_size"]), rng)
        # held-out separation of naturals from strongly perturbed poses
        strong = perturbed[n_pert:][labels[n_pert:] < 0.5]
        report = {"final_loss": result.losses[-1], "losses": result.losses,
                  "heldout_auc": disc.auc(disc.predict(result.params, natural[n_nat:]),
                                          disc.predict(result.params, strong)) if len(strong) else None}
        result.params.save(self.path("discriminator.bin"))
        _dump_json(self.path("discriminator_report.json"), report)
        return result.params, report

    def objective(self) -> Objective:
        s = self.cfg["sdf"]
        return Objective(self.models[0], self.models[1], AnchorSet.load(self.path("anchors.json")),
                         disc.MlpParams.load(self.path("discriminator.bin")), self.cfg.limits(),
                         int(s["resolution"]), int(s["padding"]), float(s["length_unit"]))

    def optimize(self, traces: bool = False) -> BatchResult:
        initial = load_pairs(self.path("initial.json"))
        obj = self.objective()
        tol = float(self.cfg["filter"]["tolerance_mm"]) / 1000.0
        result = run_batch(initial, obj, self.cfg.schedule(), int(self.cfg["workers"]), tol, keep_traces=traces)
        save_pairs(self.path("optimized.json"), [r.pair for r in result.records],
                   {"errors": [r.error for r in result.records]})
        timing = {"seconds": result.seconds, "per_pair": [r.seconds for r in result.records]}
        _dump_json(self.path("optimize_timing.json"), timing)
        if traces:
            tdir = self.path("traces")
            tdir.mkdir(exist_ok=True)
            for i, rec in enumerate(result.records):
                write_trace(tdir / f"pair_{i:05d}.csv", rec.trace or [])
        return result

    def filter(self):
        optimized = load_pairs(self.path("optimized.json"))
        errors = json.loads(self.path("optimized.json").read_text()).get("errors") or [None] * len(optimized)
        obj = self.objective()
        tol = float(self.cfg["filter"]["tolerance_mm"]) / 1000.0
        kept, rows = [], []
        for i, (pair, err) in enumerate(zip(optimized, errors)):
            if err is not None:
                rows.append({"index": i, "valid": False, "error": err})
                continue
            v = validity_filter(pair, obj, tol)
            rows.append({"index": i, "valid": v.valid, "penetration_mm": v.penetration * 1000.0,
                         "limit_violations": [f"{x.side}:{x.joint}.{x.axis}:{x.excess:+.6g}" for x in v.violations]})
            if v.valid:
                kept.append(pair)
        stats = {"pairs": len(optimized), "kept": len(kept),
                 "yield": len(kept) / len(optimized) if optimized else None}
        save_pairs(self.path("library.json"), kept)
        _dump_json(self.path("filter_report.json"), {"stats": stats, "pairs": rows})
        return kept, stats

    def export(self, cameras: str | None = None):
        library = load_pairs(self.path("library.json"))
        r = self.cfg["rig"]
        stats = json.loads(self.path("filter_report.json").read_text())["stats"]
        return export_annotations(
            library, self.models, self.out, cameras or r["cameras"], float(r["radius"]), int(r["tracks"]),
            int(r["views_per_track"]), r["elevations_deg"], float(r["fx"]), float(r["fy"]),
            seed=int(self.cfg["seed"]) * 1000 + _STREAM["export"], config_hash=self.cfg.hash(),
            extra={"yield": stats})

    def run_all(self, cameras: str | None = None):
        self.gen_poses()
        self.select_anchors()
        self.train_discriminator()
        self.optimize()
        self.filter()
        return self.export(cameras)


__all__ = ["POSES_FORMAT", "Pipeline", "load_pairs", "save_pairs"]
