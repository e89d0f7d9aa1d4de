"""Synthetic multi-sensor scenes: placed boxes, ray-cast LiDAR, radar, flat-shaded cameras."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from skimage.draw import polygon as fill_polygon

from ..geom import Box3D, CameraCalib, project_points
from .spec import SceneSpec

LIDAR_COLUMNS = ("x", "y", "z", "intensity", "beam_index")
RADAR_COLUMNS = ("x", "y", "z", "vx", "vy", "rcs")


@dataclass
class SceneSample:
    scene_id: str
    gt_boxes: List[Box3D]
    lidar: np.ndarray  # P×5
    radar: np.ndarray  # Q×6
    images: np.ndarray  # N×3×H×W
    calibs: List[CameraCalib]
    radar_source: np.ndarray = field(default_factory=lambda: np.zeros(0))  # Q, object index or −1
    placement_shortfall: int = 0
    velocity_available: bool = True
    provenance: dict = field(default_factory=dict)

    @property
    def boxes_array(self) -> np.ndarray:
        if not self.gt_boxes:
            return np.zeros((0, 10))
        return np.stack([b.to_array() for b in self.gt_boxes])


# ------------------------------------------------------------------ placement


def _visible_in_any(center: np.ndarray, calibs: List[CameraCalib]) -> bool:
    for calib in calibs:
        _, _, vis = project_points(center[None], calib)
        if vis[0]:
            return True
    return False


def _place_boxes(spec: SceneSpec, rng: np.random.Generator, calibs) -> tuple:
    boxes: List[Box3D] = []
    radii: List[float] = []
    tries = 0
    while len(boxes) < spec.num_objects and tries < spec.placement_retries:
        tries += 1
        cls_id = int(rng.integers(spec.n_classes))
        cs = spec.classes[cls_id]
        scale = 1.0 + cs.size_jitter * rng.uniform(-1.0, 1.0, size=3)
        w, h, l = (float(s) for s in np.asarray(cs.size) * scale)
        yaw = float(rng.uniform(-math.pi, math.pi))
        r = float(rng.uniform(spec.min_radius, spec.max_radius))
        az = float(rng.uniform(-math.pi, math.pi))
        x, y = r * math.cos(az), r * math.sin(az)
        speed = float(rng.uniform(0.0, cs.max_speed))
        if max(abs(x), abs(y)) + 0.5 * math.hypot(w, l) > spec.xy_half_extent:
            continue
        z = spec.ground_z + h / 2.0
        center = np.array([x, y, z])
        if spec.require_camera_visibility and calibs and not _visible_in_any(center, calibs):
            continue
        rad = 0.5 * math.hypot(w, l) + spec.placement_margin
        if any(math.hypot(x - b.center[0], y - b.center[1]) < rad + rb for b, rb in zip(boxes, radii)):
            continue
        vel = (speed * math.cos(yaw), speed * math.sin(yaw))
        boxes.append(Box3D((x, y, z), (w, h, l), yaw, vel, cls_id))
        radii.append(rad)
    return boxes, spec.num_objects - len(boxes)


# ---------------------------------------------------------------------- lidar


def ray_box_hits(dirs: np.ndarray, box: Box3D) -> np.ndarray:
    """Entry distance along unit rays from the origin into ``box``; inf for misses."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])  # box → world
    origin_b = rot.T @ (-np.asarray(box.center))
    d_b = dirs @ rot  # (rot.T @ d) for every row
    w, h, l = box.size
    half = np.array([l / 2.0, w / 2.0, h / 2.0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - origin_b) / d_b
        t2 = (half - origin_b) / d_b
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def render_lidar(spec: SceneSpec, boxes: List[Box3D]) -> np.ndarray:
    incl = spec.beam_inclinations()
    n_az = int(round(360.0 / spec.azimuth_step_deg))
    az = np.radians(np.arange(n_az) * spec.azimuth_step_deg - 180.0)
    th, ph = np.meshgrid(incl, az, indexing="ij")
    beam = np.broadcast_to(np.arange(len(incl))[:, None], th.shape).reshape(-1)
    ct = np.cos(th).reshape(-1)
    dirs = np.stack([ct * np.cos(ph).reshape(-1), ct * np.sin(ph).reshape(-1), np.sin(th).reshape(-1)], axis=1)

    dist = np.full(len(dirs), np.inf)
    refl = np.full(len(dirs), spec.ground_reflectivity)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, spec.ground_z / dirs[:, 2], np.inf)
    dist = np.minimum(dist, t_ground)
    for box in boxes:
        t = ray_box_hits(dirs, box)
        closer = t < dist
        dist[closer] = t[closer]
        refl[closer] = spec.classes[box.class_id].reflectivity
    keep = dist <= spec.max_range
    pts = dirs[keep] * dist[keep, None]
    return np.concatenate([pts, refl[keep, None], beam[keep, None].astype(np.float64)], axis=1)


# ---------------------------------------------------------------------- radar


def render_radar(spec: SceneSpec, boxes: List[Box3D], rng: np.random.Generator) -> tuple:
    rows = []
    source = []
    lo, hi = spec.radar_points_per_object
    for k, box in enumerate(boxes):
        cs = spec.classes[box.class_id]
        n = int(rng.integers(lo, hi + 1))
        w, _, l = box.size
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        for _ in range(n):
            a = rng.uniform(-0.5, 0.5) * l
            b = rng.uniform(-0.5, 0.5) * w
            noise = rng.normal(0.0, spec.radar_position_sigma, size=2)
            x = box.center[0] + c * a - s * b + noise[0]
            y = box.center[1] + s * a + c * b + noise[1]
            vel = np.asarray(box.velocity) + rng.normal(0.0, spec.radar_velocity_sigma, size=2)
            rcs = cs.rcs + rng.normal(0.0, spec.radar_rcs_sigma)
            rows.append([x, y, box.center[2], vel[0], vel[1], rcs])
            source.append(k)
    for _ in range(spec.radar_clutter):
        x, y = rng.uniform(-spec.xy_half_extent, spec.xy_half_extent, size=2)
        vel = rng.normal(0.0, spec.radar_velocity_sigma, size=2)
        rows.append([x, y, spec.ground_z + 0.5, vel[0], vel[1], rng.uniform(-5.0, 5.0)])
        source.append(-1)
    radar = np.asarray(rows, dtype=np.float64).reshape(-1, 6)
    return radar, np.asarray(source, dtype=np.float64)


# --------------------------------------------------------------------- camera


def _background(spec: SceneSpec, calib: CameraCalib) -> np.ndarray:
    h, w = calib.height, calib.width
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    ray_cam = np.stack([(u - calib.cx) / calib.fx, (v - calib.cy) / calib.fy, np.ones_like(u)], axis=-1)
    ray_world = ray_cam @ calib.R  # R.T applied to each ray
    cam_pos = -calib.R.T @ calib.t
    below = ray_world[..., 2] < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(below, (spec.ground_z - cam_pos[2]) / ray_world[..., 2], np.inf)
    ground = below & (np.linalg.norm(ray_world, axis=-1) * t <= spec.max_range * 2)
    img = np.where(ground[None], np.asarray(spec.ground_color)[:, None, None], np.asarray(spec.sky_color)[:, None, None])
    return img


def render_camera(spec: SceneSpec, calib: CameraCalib, boxes: List[Box3D]) -> np.ndarray:
    img = _background(spec, calib).copy()
    cam_pos = -calib.R.T @ calib.t
    order = sorted(range(len(boxes)), key=lambda k: -np.linalg.norm(np.asarray(boxes[k].center) - cam_pos))
    for k in order:  # painter's order: far to near
        box = boxes[k]
        corners = box.corners()
        uv, depth, _ = project_points(corners, calib)
        if np.any(depth <= 1e-3):
            continue
        cam = corners @ calib.R.T + calib.t
        u = calib.fx * cam[:, 0] / cam[:, 2] + calib.cx
        v = calib.fy * cam[:, 1] / cam[:, 2] + calib.cy
        pts = np.stack([u, v], axis=1)
        color = np.asarray(spec.classes[box.class_id].color)
        try:
            hull = pts[ConvexHull(pts).vertices]
            rr, cc = fill_polygon(hull[:, 1], hull[:, 0], shape=(calib.height, calib.width))
            img[:, rr, cc] = color[:, None]
        except QhullError:
            pass
        # sub-pixel objects still mark the pixel under their projected centre
        cuv, _, cvis = project_points(np.asarray(box.center)[None], calib)
        if cvis[0]:
            col = int(np.clip(np.floor(cuv[0, 0] + 0.5), 0, calib.width - 1))
            row = int(np.clip(np.floor(cuv[0, 1] + 0.5), 0, calib.height - 1))
            img[:, row, col] = color
    return img


# ------------------------------------------------------------------------ api


def generate_scene(spec: SceneSpec, seed: int, scene_id: str | None = None) -> SceneSample:
    """Render one synthetic frame; deterministic in (spec, seed)."""
    rng = np.random.default_rng([int(spec.seed), int(seed)])
    calibs = spec.camera_calibs()
    boxes, shortfall = _place_boxes(spec, rng, calibs)
    lidar = render_lidar(spec, boxes)
    radar, source = render_radar(spec, boxes, rng)
    if calibs:
        images = np.stack([render_camera(spec, c, boxes) for c in calibs])
    else:
        images = np.zeros((0, 3, spec.image_height, spec.image_width))
    return SceneSample(
        scene_id=scene_id or f"scene_{seed:06d}",
        gt_boxes=boxes,
        lidar=lidar,
        radar=radar,
        images=images,
        calibs=calibs,
        radar_source=source,
        placement_shortfall=shortfall,
        velocity_available=spec.velocity_available,
        provenance={"seed": int(seed), "spec_seed": int(spec.seed), "lidar": "full"},
    )
