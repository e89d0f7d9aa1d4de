"""Coordinate math: spherical angles, pinhole projection, normalised space, boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

DEPTH_EPS = 1e-3


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------- types


@dataclass(frozen=True)
class DetectionRange:
    x_min: float = -32.0
    x_max: float = 32.0
    y_min: float = -32.0
    y_max: float = 32.0
    z_min: float = -3.0
    z_max: float = 5.0

    def __post_init__(self):
        for lo, hi, axis in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y"), (self.z_min, self.z_max, "z")):
            if not hi > lo:
                raise GeometryError(f"detection range {axis}: max {hi} must exceed min {lo}")

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points)[..., :3]
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


@dataclass
class CameraCalib:
    """Pinhole camera: ``K`` intrinsics, world→camera rotation ``R`` and translation ``t``.

    Camera frame convention: x right, y down, z along the optical axis.
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise GeometryError("focal lengths must be positive")
        if not np.allclose(self.R.T @ self.R, np.eye(3), atol=1e-9) or np.linalg.det(self.R) <= 0:
            raise GeometryError("extrinsic rotation must be orthonormal with det +1")

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def cx(self) -> float:
        return float(self.K[0, 2])

    @property
    def cy(self) -> float:
        return float(self.K[1, 2])

    def to_array(self) -> np.ndarray:
        """Flatten to 23 numbers: K (9), R (9), t (3), width, height."""
        return np.concatenate([self.K.ravel(), self.R.ravel(), self.t, [self.width, self.height]])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "CameraCalib":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr[:9].reshape(3, 3), arr[9:18].reshape(3, 3), arr[18:21], int(arr[21]), int(arr[22]))


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World→camera rotation for a camera looking along ``forward`` with world ``up``."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    right = np.cross(f, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.stack([right, down, f])


def make_camera(yaw: float, hfov_deg: float, width: int, height: int, position=(0.0, 0.0, 0.0)) -> CameraCalib:
    forward = (math.cos(yaw), math.sin(yaw), 0.0)
    R = look_rotation(forward)
    f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    K = np.array([[f, 0.0, width / 2.0 - 0.5], [0.0, f, height / 2.0 - 0.5], [0.0, 0.0, 1.0]])
    t = -R @ np.asarray(position, dtype=np.float64)
    return CameraCalib(K, R, t, width, height)


@dataclass
class Box3D:
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]  # (w, h, l): width across, height, length along heading
    yaw: float
    velocity: Tuple[float, float] = (0.0, 0.0)
    class_id: int = 0

    def __post_init__(self):
        if min(self.size) <= 0:
            raise GeometryError(f"box size must be positive, got {self.size}")
        self.yaw = wrap_angle(self.yaw)

    def to_array(self) -> np.ndarray:
        return np.array([*self.center, *self.size, self.yaw, *self.velocity, self.class_id], dtype=np.float64)

    @classmethod
    def from_array(cls, row) -> "Box3D":
        r = [float(v) for v in row]
        return cls(tuple(r[0:3]), tuple(r[3:6]), r[6], tuple(r[7:9]), int(round(r[9])))

    @property
    def longest_edge(self) -> float:
        return max(self.size)

    def corners(self) -> np.ndarray:
        """8×3 corner coordinates."""
        w, h, l = self.size
        dx = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * l / 2
        dy = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * w / 2
        dz = np.array([1, -1, 1, -1, 1, -1, 1, -1]) * h / 2
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = self.center[0] + c * dx - s * dy
        y = self.center[1] + s * dx + c * dy
        z = self.center[2] + dz
        return np.stack([x, y, z], axis=1)


def boxes_to_array(boxes) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 10))
    return np.stack([b.to_array() for b in boxes])


# ------------------------------------------------------------------ spherical


def wrap_angle(theta: float) -> float:
    """Map to (−π, π]."""
    out = math.atan2(math.sin(theta), math.cos(theta))
    return math.pi if out == -math.pi else out


def cart_to_spherical(p) -> np.ndarray:
    """(x, y, z) → (range, inclination = arcsin(z/r), azimuth = atan2(y, x)).

    Accepts a 3-vector or an N×3 array; origin points are rejected.
    """
    p = np.asarray(p, dtype=np.float64)
    r = np.sqrt(np.sum(p[..., :3] ** 2, axis=-1))
    if np.any(r == 0):
        raise GeometryError("inclination is undefined at the origin")
    # same angle as arcsin(z / r), but stays accurate near the poles
    theta = np.arctan2(p[..., 2], np.hypot(p[..., 0], p[..., 1]))
    phi = np.arctan2(p[..., 1], p[..., 0])
    return np.stack([r, theta, phi], axis=-1)


def spherical_to_cart(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    r, theta, phi = s[..., 0], s[..., 1], s[..., 2]
    ct = np.cos(theta)
    return np.stack([r * ct * np.cos(phi), r * ct * np.sin(phi), r * np.sin(theta)], axis=-1)


# ------------------------------------------------------------------ projection


def project_points(points: np.ndarray, calib: CameraCalib) -> tuple:
    """Vectorised projection of N×3 world points.

    Returns (uv N×2, depth N, visible N). Points at depth ≤ 1e-3 m are
    invisible and get finite coordinates clamped to the image.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ calib.R.T + calib.t
    depth = cam[:, 2]
    front = depth > DEPTH_EPS
    safe = np.where(front, depth, 1.0)
    u = calib.fx * cam[:, 0] / safe + calib.cx
    v = calib.fy * cam[:, 1] / safe + calib.cy
    inside = (u >= -0.5) & (u <= calib.width - 0.5) & (v >= -0.5) & (v <= calib.height - 0.5)
    visible = front & inside
    u = np.where(front, u, calib.cx)
    v = np.where(front, v, calib.cy)
    u = np.clip(u, -0.5, calib.width - 0.5)
    v = np.clip(v, -0.5, calib.height - 0.5)
    return np.stack([u, v], axis=1), depth, visible


def project_to_image(p, calib: CameraCalib) -> tuple:
    """Single point → (u, v, depth, visible)."""
    uv, depth, vis = project_points(np.asarray(p).reshape(1, 3), calib)
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0]), bool(vis[0])


def backproject(u: float, v: float, depth: float, calib: CameraCalib) -> np.ndarray:
    """Point on the ray through pixel (u, v) at the given camera depth, in world frame."""
    cam = np.array([(u - calib.cx) * depth / calib.fx, (v - calib.cy) * depth / calib.fy, depth])
    return calib.R.T @ (cam - calib.t)


# ----------------------------------------------------------- normalised space


def normalize_point(p, rng: DetectionRange) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.clip((p[..., :3] - rng.lo) / rng.extent, 0.0, 1.0)


def denormalize_point(c, rng: DetectionRange) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return rng.lo + c[..., :3] * rng.extent


def bev_project(c, bev_hw: Tuple[int, int]) -> np.ndarray:
    """Normalised point(s) → continuous BEV pixel coords (u along x, v along y)."""
    c = np.asarray(c, dtype=np.float64)
    h, w = bev_hw
    return np.stack([c[..., 0] * (w - 1), c[..., 1] * (h - 1)], axis=-1)


def bev_center_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


# ------------------------------------------------------------------------ yaw


def yaw_to_sincos(theta) -> tuple:
    return np.sin(theta), np.cos(theta)


def sincos_to_yaw(s, c):
    s = np.asarray(s, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    norm = np.hypot(s, c)
    if np.any(norm == 0):
        raise GeometryError("yaw is undefined for (sin, cos) = (0, 0)")
    out = np.arctan2(s / norm, c / norm)
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if out.ndim == 0 else out
