"""Pipeline configuration: a nested YAML file with defaults for every key."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .optimizer import Schedule
from .pose_synthesis import TABLE_LIMITS_DEG, AugmentationConfig, ConfigurationError, JointLimits

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "paths": {"out_dir": "ihsynth_out", "seeds": None, "anchors": None, "discriminator": None,
              "proportions": None},
    "seeds": {"count": 50, "contact_gap_m": 0.002},
    "augmentation": {"count": 10, "bend_range_deg": [-90.0, 90.0], "splay_range_deg": [-30.0, 30.0]},
    "anchors": {"count": 108, "threshold_m": 0.02},
    "discriminator": {"natural": 2000, "perturbed": 2000, "epochs": 30, "lr": 0.001, "batch_size": 64,
                      "jitter_deg": 3.0},
    "sdf": {"resolution": 32, "padding": 3, "length_unit": 50.0},
    "schedule": {"iterations": 215, "lr": 0.01, "ramp_end": 165, "attraction": [0.1, 2.0], "anatomic": 5.0,
                 "adversarial": 0.5, "penetration": [10.0, 1.0], "rebuild_every": 40, "patience": 20,
                 "lr_decay": 0.5, "translation_scale": 0.1},
    "filter": {"tolerance_mm": 2.0},
    "rig": {"radius": 0.6, "tracks": 4, "views_per_track": 10, "elevations_deg": [-45.0, -15.0, 15.0, 45.0],
            "fx": 500.0, "fy": 500.0, "cameras": "sparse"},
    "limits": {name: [list(r) for r in ranges] for name, ranges in TABLE_LIMITS_DEG.items()},
}


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and key != "limits":
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {where}{key} must be a section")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass
class PipelineConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str | None = None

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "PipelineConfig":
        data = copy.deepcopy(DEFAULTS)
        source = None
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigurationError(f"config file not found: {path}")
            try:
                doc = yaml.safe_load(p.read_text()) or {}
            except yaml.YAMLError as exc:
                raise ConfigurationError(f"{path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigurationError(f"{path}: top level must be a mapping")
            data = _merge(data, doc)
            source = str(p)
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(data, source)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def validate(self):
        d = self.data
        if int(d["workers"]) < 1:
            raise ConfigurationError("workers must be >= 1")
        if int(d["seeds"]["count"]) < 0:
            raise ConfigurationError("seeds.count must be >= 0")
        if float(d["filter"]["tolerance_mm"]) < 0:
            raise ConfigurationError("filter.tolerance_mm must be >= 0")
        if d["rig"]["cameras"] not in ("sparse", "full"):
            raise ConfigurationError("rig.cameras must be 'sparse' or 'full'")
        if not float(d["rig"]["radius"]) > 0:
            raise ConfigurationError("rig.radius must be positive")
        self.augmentation().validate()
        self.schedule().validate()
        self.limits()
        for key, p in d["paths"].items():
            if key != "out_dir" and p is not None and not Path(p).exists():
                raise ConfigurationError(f"paths.{key} does not exist: {p}")

    def augmentation(self) -> AugmentationConfig:
        a = self.data["augmentation"]
        return AugmentationConfig(int(a["count"]), tuple(a["bend_range_deg"]), tuple(a["splay_range_deg"]),
                                  int(self.data["seed"]))

    def schedule(self) -> Schedule:
        s = dict(self.data["schedule"])
        s["attraction"] = tuple(s["attraction"])
        s["penetration"] = tuple(s["penetration"])
        try:
            return Schedule(**s)
        except TypeError as exc:
            raise ConfigurationError(f"bad schedule section: {exc}") from exc

    def limits(self) -> JointLimits:
        return JointLimits.from_degrees(self.data["limits"])

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)

    def canonical_json(self) -> str:
        """Key-sorted JSON of every setting that can change results (the
        output directory and worker count cannot)."""
        d = copy.deepcopy(self.data)
        d["paths"].pop("out_dir")
        d.pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


__all__ = ["DEFAULTS", "PipelineConfig"]
