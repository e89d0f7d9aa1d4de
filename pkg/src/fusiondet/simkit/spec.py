"""Scene-generation parameters."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..geom import CameraCalib, make_camera


@dataclass
class ClassSpec:
    name: str
    size: Tuple[float, float, float]  # (w, h, l) metres
    size_jitter: float = 0.05  # relative, uniform ±
    color: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    reflectivity: float = 0.5
    rcs: float = 5.0
    max_speed: float = 5.0


def default_classes() -> List[ClassSpec]:
    # The two sedans are identical to LiDAR and radar; only camera colour separates them.
    return [
        ClassSpec("sedan_red", (1.9, 1.6, 4.5), 0.05, (0.85, 0.1, 0.1), 0.6, 10.0, 8.0),
        ClassSpec("sedan_blue", (1.9, 1.6, 4.5), 0.05, (0.1, 0.2, 0.85), 0.6, 10.0, 8.0),
        ClassSpec("pedestrian", (0.7, 1.75, 0.7), 0.05, (0.9, 0.8, 0.1), 0.3, 0.0, 1.5),
    ]


def nuscenes_like_beams() -> List[float]:
    """32 beam inclinations (deg) spanning roughly [−30°, 10°] at ~1.28° pitch."""
    return [float(v) for v in np.linspace(-29.9, 9.9, 32)]


@dataclass
class CameraSpec:
    yaw_deg: float
    hfov_deg: float = 100.0


@dataclass
class SceneSpec:
    seed: int = 0
    num_objects: int = 4
    classes: List[ClassSpec] = field(default_factory=default_classes)
    # placement: annulus around the ego sensor, clipped to a square half-extent
    min_radius: float = 5.0
    max_radius: float = 28.0
    xy_half_extent: float = 29.0
    require_camera_visibility: bool = True
    placement_margin: float = 0.5
    placement_retries: int = 200
    # camera rig (shared image size)
    cameras: List[CameraSpec] = field(default_factory=lambda: [CameraSpec(0.0), CameraSpec(180.0)])
    image_width: int = 64
    image_height: int = 64
    camera_height: float = 0.0
    sky_color: Tuple[float, float, float] = (0.55, 0.7, 0.9)
    ground_color: Tuple[float, float, float] = (0.35, 0.35, 0.35)
    # lidar: sensor at the origin, flat ground below it
    beam_inclinations_deg: List[float] = field(default_factory=nuscenes_like_beams)
    azimuth_step_deg: float = 0.5
    max_range: float = 60.0
    ground_z: float = -1.8
    ground_reflectivity: float = 0.2
    # radar
    radar_points_per_object: Tuple[int, int] = (1, 3)
    radar_clutter: int = 5
    radar_position_sigma: float = 0.3
    radar_velocity_sigma: float = 0.2
    radar_rcs_sigma: float = 1.0
    velocity_available: bool = True

    def __post_init__(self):
        self.classes = [c if isinstance(c, ClassSpec) else ClassSpec(**c) for c in self.classes]
        self.cameras = [c if isinstance(c, CameraSpec) else CameraSpec(**c) for c in self.cameras]
        incl = np.asarray(self.beam_inclinations_deg, dtype=np.float64)
        if incl.size and np.any(np.diff(incl) <= 0):
            raise ValueError("beam inclinations must be strictly increasing")
        if self.num_objects < 0:
            raise ValueError("num_objects must be non-negative")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> List[str]:
        return [c.name for c in self.classes]

    def beam_inclinations(self) -> np.ndarray:
        return np.radians(np.asarray(self.beam_inclinations_deg, dtype=np.float64))

    def camera_calibs(self) -> List[CameraCalib]:
        return [
            make_camera(math.radians(c.yaw_deg), c.hfov_deg, self.image_width, self.image_height, (0.0, 0.0, self.camera_height))
            for c in self.cameras
        ]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene spec keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("radar_points_per_object", "sky_color", "ground_color"):
            if key in d:
                d[key] = tuple(d[key])
        if "classes" in d:
            d["classes"] = [
                ClassSpec(**{**c, "size": tuple(c["size"]), "color": tuple(c["color"])}) if isinstance(c, dict) else c
                for c in d["classes"]
            ]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))
