"""Dataset directories: ``manifest.json`` plus one binary record per scene.

Scene records reuse the float32 container from ``diffcore.checkpoint`` with
their own magic. The manifest carries the format version, split tag, a
snapshot of the generating spec and a SHA-256 per record.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..diffcore.checkpoint import ContainerError, decode_container, encode_container
from ..geom import Box3D, CameraCalib
from .scene import SceneSample

SCENE_MAGIC = b"FDSCENE\x01"
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class DatasetManifest:
    format_version: int = MANIFEST_VERSION
    split: str = "train"
    files: List[dict] = field(default_factory=list)  # {"name", "sha256", "scene_id"}
    spec: Optional[dict] = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
                "split": self.split,
                "files": self.files,
                "spec": self.spec,
                "provenance": self.provenance,
            },
            indent=2,
            sort_keys=True,
        )


def encode_scene(sample: SceneSample) -> bytes:
    arrays = {
        "gt_boxes": sample.boxes_array.reshape(-1, 10),
        "lidar": np.asarray(sample.lidar).reshape(-1, 5),
        "radar": np.asarray(sample.radar).reshape(-1, 6),
        "radar_source": np.asarray(sample.radar_source).reshape(-1),
        "images": np.asarray(sample.images),
        "calibs": np.stack([c.to_array() for c in sample.calibs]) if sample.calibs else np.zeros((0, 23)),
    }
    meta = {
        "scene_id": sample.scene_id,
        "placement_shortfall": int(sample.placement_shortfall),
        "velocity_available": bool(sample.velocity_available),
        "provenance": sample.provenance,
    }
    return encode_container(arrays, meta, magic=SCENE_MAGIC)


def decode_scene(blob: bytes, source: str = "<bytes>") -> SceneSample:
    try:
        arrays, meta = decode_container(blob, magic=SCENE_MAGIC, source=source)
    except ContainerError as exc:
        raise DatasetError(str(exc)) from exc
    boxes = [Box3D.from_array(row) for row in arrays["gt_boxes"]]
    calibs = [CameraCalib.from_array(row) for row in arrays["calibs"]]
    return SceneSample(
        scene_id=meta["scene_id"],
        gt_boxes=boxes,
        lidar=arrays["lidar"],
        radar=arrays["radar"],
        images=arrays["images"],
        calibs=calibs,
        radar_source=arrays["radar_source"],
        placement_shortfall=meta.get("placement_shortfall", 0),
        velocity_available=meta.get("velocity_available", True),
        provenance=meta.get("provenance", {}),
    )


def write_dataset(
    samples: Sequence[SceneSample],
    out_dir,
    spec: Optional[dict] = None,
    split: str = "train",
    provenance: Optional[dict] = None,
) -> DatasetManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(split=split, spec=spec, provenance=provenance or {})
    for i, sample in enumerate(samples):
        name = f"scene_{i:05d}.bin"
        blob = encode_scene(sample)
        (out / name).write_bytes(blob)
        manifest.files.append({"name": name, "scene_id": sample.scene_id, "sha256": hashlib.sha256(blob).hexdigest()})
    (out / MANIFEST_NAME).write_text(manifest.to_json())
    return manifest


def read_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise DatasetError(f"{path}: manifest not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: manifest is not valid JSON") from exc
    if raw.get("format_version") != MANIFEST_VERSION:
        raise DatasetError(f"{path}: unsupported manifest version {raw.get('format_version')}")
    return DatasetManifest(
        format_version=raw["format_version"],
        split=raw.get("split", "train"),
        files=raw.get("files", []),
        spec=raw.get("spec"),
        provenance=raw.get("provenance", {}),
    )


def read_dataset(data_dir) -> List[SceneSample]:
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    samples = []
    for entry in manifest.files:
        path = data_dir / entry["name"]
        if not path.exists():
            raise DatasetError(f"{path}: listed in manifest but missing")
        blob = path.read_bytes()
        if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise DatasetError(f"{path}: checksum mismatch")
        samples.append(decode_scene(blob, source=str(path)))
    return samples
