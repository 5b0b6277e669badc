"""Spherical camera rigs, pinhole projection and annotation export.

Cameras follow the OpenCV convention: x right, y down, z forward, with
``x_cam = R @ x_world + t``.  World up is +y.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import FileFormatError, write_obj
from .hand_model import HandModel, forward_kinematics, joint_positions, skin_vertices
from .pose_synthesis import ConfigurationError, PosePair

IMAGE_WIDTH = 512
IMAGE_HEIGHT = 334
TRACK_ELEVATIONS_DEG = (-45.0, -15.0, 15.0, 45.0)
WORLD_UP = np.array([0.0, 1.0, 0.0])
ANNOTATION_FORMAT = "ihsynth-annotation"
MANIFEST_FORMAT = "ihsynth-manifest"
FORMAT_VERSION = 1


@dataclass(eq=False)
class CameraParams:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray        # world -> camera
    translation: np.ndarray
    width: int = IMAGE_WIDTH
    height: int = IMAGE_HEIGHT
    track: int = -1
    view: int = -1
    index: int = -1             # position in the full rig

    @property
    def position(self):
        return -self.rotation.T @ self.translation

    @property
    def intrinsics(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
                "width": self.width, "height": self.height, "track": self.track, "view": self.view,
                "index": self.index}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   np.array(d["rotation"], dtype=np.float64), np.array(d["translation"], dtype=np.float64),
                   int(d["width"]), int(d["height"]), int(d.get("track", -1)), int(d.get("view", -1)),
                   int(d.get("index", -1)))


def look_at(position, target, up=WORLD_UP):
    """World-to-camera rotation and translation aiming +z_cam at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(float(forward @ up)) > 1.0 - 1e-9:   # looking straight up or down
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return rot, -rot @ position


def build_rig(center, radius: float = 0.6, tracks: int = 4, views_per_track: int = 10,
              elevations_deg=None, fx: float = 500.0, fy: float = 500.0,
              width: int = IMAGE_WIDTH, height: int = IMAGE_HEIGHT) -> list[CameraParams]:
    """Cameras on ``tracks`` circles of a sphere around ``center``, all aimed at it.

    Track k sits at elevation ``elevations_deg[k]``; views are evenly spaced
    in azimuth starting at 0.
    """
    if not radius > 0:
        raise ConfigurationError("rig radius must be positive")
    if elevations_deg is None:
        elevations_deg = TRACK_ELEVATIONS_DEG if tracks == 4 else np.linspace(-45.0, 45.0, tracks)
    elevations = np.deg2rad(np.asarray(elevations_deg, dtype=np.float64))
    if len(elevations) != tracks or views_per_track < 1:
        raise ConfigurationError("need one elevation per track and at least one view per track")
    center = np.asarray(center, dtype=np.float64)
    cams = []
    for k, el in enumerate(elevations):
        for v in range(views_per_track):
            az = 2.0 * np.pi * v / views_per_track
            offset = radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
            rot, t = look_at(center + offset, center)
            cams.append(CameraParams(fx, fy, width / 2.0, height / 2.0, rot, t, width, height, k, v, len(cams)))
    return cams


def project(points, cam: CameraParams):
    """Pixels (n, 2), camera-space depths (n,) and an in-front flag (n,)."""
    pts = np.asarray(points, dtype=np.float64)
    xc = pts @ cam.rotation.T + cam.translation
    z = xc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([cam.fx * xc[..., 0] / z + cam.cx, cam.fy * xc[..., 1] / z + cam.cy], axis=-1)
    return uv, z, z > 0


def select_cameras(rig, mode: str, rng: np.random.Generator, views_per_track: int):
    """All cameras ("full") or one random track per azimuth slot ("sparse")."""
    if mode == "full":
        return list(rig)
    if mode != "sparse":
        raise ConfigurationError(f"unknown camera mode {mode!r}")
    tracks = len(rig) // views_per_track
    picks = rng.integers(tracks, size=views_per_track)
    return [rig[k * views_per_track + v] for v, k in enumerate(picks)]


# ------------------------------------------------------------------ records

@dataclass(eq=False)
class AnnotationRecord:
    pose: PosePair
    joints_3d: np.ndarray      # (2, 21, 3) camera coordinates, meters; right hand first
    joints_2d: np.ndarray      # (2, 21, 2) pixels
    camera: CameraParams
    seed_id: int = -1
    aug_index: int = -1
    camera_index: int = -1

    def reprojection_error(self):
        """Largest pixel distance between stored 2D joints and the reprojection
        of the stored camera-space 3D joints."""
        xc = self.joints_3d
        uv = np.stack([self.camera.fx * xc[..., 0] / xc[..., 2] + self.camera.cx,
                       self.camera.fy * xc[..., 1] / xc[..., 2] + self.camera.cy], axis=-1)
        return float(np.max(np.linalg.norm(uv - self.joints_2d, axis=-1)))


def pair_joints(pair: PosePair, models) -> np.ndarray:
    """(2, 21, 3) world joints, right hand first."""
    return np.stack([joint_positions(m, forward_kinematics(m, p)) for m, p in zip(models, pair.hands())])


def make_records(pair: PosePair, models, cameras) -> list[AnnotationRecord]:
    world = pair_joints(pair, models)
    out = []
    for cam in cameras:
        xc = world @ cam.rotation.T + cam.translation
        uv, _, _ = project(world, cam)
        out.append(AnnotationRecord(pair, xc, uv, cam, pair.seed_id, pair.aug_index, cam.index))
    return out


def _pair_document(pair: PosePair, records, index: int):
    return {
        "format": ANNOTATION_FORMAT, "version": FORMAT_VERSION, "pair_index": index,
        "seed_id": pair.seed_id, "aug_index": pair.aug_index, "pose": pair.to_dict(),
        "views": [{"camera_index": r.camera_index, "camera": r.camera.to_dict(),
                   "joints_3d": r.joints_3d.tolist(), "joints_2d": r.joints_2d.tolist()} for r in records],
    }


def _dump(doc) -> str:
    # float repr is the shortest string that parses back to the same double
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class ExportResult:
    manifest_path: Path
    files: list
    records: int
    manifest: dict = field(default_factory=dict)


def export_annotations(library, models, out_dir, camera_mode: str = "sparse", radius: float = 0.6,
                       tracks: int = 4, views_per_track: int = 10, elevations_deg=None, fx: float = 500.0,
                       fy: float = 500.0, seed: int = 0, config_hash: str = "",
                       extra: dict | None = None) -> ExportResult:
    """One JSON document per pose pair (all its cameras) plus ``manifest.json``.

    Cameras are centered on the mean of the pair's 42 joints.  Raises
    ``ValueError`` for an empty library before anything is written.
    """
    library = list(library)
    if not library:
        raise ValueError("cannot export an empty pose library")
    out_dir = Path(out_dir)
    ann_dir = out_dir / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    files, total = [], 0
    for i, pair in enumerate(library):
        center = pair_joints(pair, models).reshape(-1, 3).mean(axis=0)
        rig = build_rig(center, radius, tracks, views_per_track, elevations_deg, fx, fy)
        cams = select_cameras(rig, camera_mode, np.random.default_rng([seed, i]), views_per_track)
        records = make_records(pair, models, cams)
        text = _dump(_pair_document(pair, records, i))
        name = f"pair_{i:05d}.json"
        (ann_dir / name).write_text(text)
        files.append({"name": f"annotations/{name}", "records": len(records),
                      "sha256": hashlib.sha256(text.encode()).hexdigest()})
        total += len(records)
    manifest = {"format": MANIFEST_FORMAT, "version": FORMAT_VERSION, "config_hash": config_hash,
                "pairs": len(library), "records": total, "camera_mode": camera_mode,
                "cameras_per_pair": total // len(library), "files": files}
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(_dump(manifest))
    return ExportResult(path, files, total, manifest)


def read_pair_document(path) -> list[AnnotationRecord]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != ANNOTATION_FORMAT:
        raise FileFormatError(f"{path}: not an annotation document")
    pair = PosePair.from_dict(doc["pose"])
    return [AnnotationRecord(pair, np.array(v["joints_3d"], dtype=np.float64),
                             np.array(v["joints_2d"], dtype=np.float64), CameraParams.from_dict(v["camera"]),
                             int(doc["seed_id"]), int(doc["aug_index"]), int(v["camera_index"]))
            for v in doc["views"]]


def read_annotations(out_dir) -> list[AnnotationRecord]:
    """Every record listed in ``out_dir/manifest.json``, in manifest order."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise FileFormatError(f"{out_dir}: manifest has the wrong format tag")
    records = []
    for f in manifest["files"]:
        records.extend(read_pair_document(out_dir / f["name"]))
    return records


def export_record_meshes(record: AnnotationRecord, models: tuple[HandModel, HandModel], out_dir, stem: str):
    """Posed right and left meshes of ``record`` as OBJ, in camera coordinates."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for model, pose in zip(models, record.pose.hands()):
        verts = skin_vertices(model, forward_kinematics(model, pose))
        cam_verts = verts @ record.camera.rotation.T + record.camera.translation
        path = out_dir / f"{stem}_{model.side}.obj"
        write_obj(path, cam_verts, model.faces)
        paths.append(path)
    return paths


__all__ = [
    "ANNOTATION_FORMAT", "AnnotationRecord", "CameraParams", "ExportResult", "IMAGE_HEIGHT", "IMAGE_WIDTH",
    "MANIFEST_FORMAT", "TRACK_ELEVATIONS_DEG", "build_rig", "export_annotations", "export_record_meshes",
    "look_at", "make_records", "pair_joints", "project", "read_annotations", "read_pair_document",
    "select_cameras",
]
