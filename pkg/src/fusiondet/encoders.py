"""Modality-specific encoders producing the three feature products the sampler reads.

Grid convention shared with ``geom.bev_project``: BEV cell (row i, col j)
is centred on normalised coordinate (j / (W − 1), i / (H − 1)), so the pillar
pitch along x is extent_x / (W − 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import diffcore as dc
from .diffcore import Conv2d, Module, Tensor
from .diffcore.nn import MLP
from .geom import CameraCalib, DetectionRange, normalize_point
from .pipeline.config import ModelConfig

PILLAR_FEATURES = 5  # log(1 + count), mean offset (dx, dy, dz), mean intensity


# ------------------------------------------------------------ feature products


class _ReadCounted:
    """Counts map reads so tests can prove an unconfigured modality is never touched."""

    reads: int

    def _touch(self) -> None:
        self.reads += 1


@dataclass
class BevFeaturePyramid(_ReadCounted):
    maps: List[Tensor]  # scale j: C×H_j×W_j
    det_range: DetectionRange
    base: Optional[Tensor] = None  # pre-convolution pillar grid C×H×W
    reads: int = 0

    def level(self, j: int) -> Tensor:
        self._touch()
        return self.maps[j]

    @property
    def num_scales(self) -> int:
        return len(self.maps)


@dataclass
class RadarBevMap(_ReadCounted):
    map: Tensor  # C_ro×H×W
    pillar_size: float
    det_range: DetectionRange
    reads: int = 0

    def get(self) -> Tensor:
        self._touch()
        return self.map


@dataclass
class CameraFeaturePyramids(_ReadCounted):
    maps: List[Tensor]  # scale j: N×C×H_j×W_j
    calibs: List[CameraCalib]
    strides: List[float]
    reads: int = 0

    def level(self, j: int) -> Tensor:
        self._touch()
        return self.maps[j]

    @property
    def num_cameras(self) -> int:
        return len(self.calibs)


# ---------------------------------------------------------------- preprocessing


def grid_cells(points_xy: np.ndarray, det_range: DetectionRange, hw: tuple) -> tuple:
    """Nearest BEV cell for each point; returns (row, col, inside-mask)."""
    h, w = hw
    lo = np.array([det_range.x_min, det_range.y_min])
    ext = np.array([det_range.x_max - det_range.x_min, det_range.y_max - det_range.y_min])
    rel = (points_xy - lo) / ext
    inside = np.all((rel >= 0.0) & (rel <= 1.0), axis=1)
    col = np.clip(np.rint(rel[:, 0] * (w - 1)), 0, w - 1).astype(np.int64)
    row = np.clip(np.rint(rel[:, 1] * (h - 1)), 0, h - 1).astype(np.int64)
    return row, col, inside


@dataclass
class Pillars:
    cells: np.ndarray  # U flat cell ids (row * W + col), sorted
    stats: np.ndarray  # U×5
    hw: tuple


def pillarize(points: np.ndarray, det_range: DetectionRange, bev_size: int) -> Pillars:
    """Per-pillar statistics of the points inside the detection range."""
    hw = (bev_size, bev_size)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 5)
    keep = det_range.contains(pts[:, :3]) if len(pts) else np.zeros(0, dtype=bool)
    pts = pts[keep]
    if len(pts) == 0:
        return Pillars(np.zeros(0, dtype=np.int64), np.zeros((0, PILLAR_FEATURES)), hw)
    row, col, _ = grid_cells(pts[:, :2], det_range, hw)
    flat = row * hw[1] + col
    cells, inverse, counts = np.unique(flat, return_inverse=True, return_counts=True)
    pitch_x = (det_range.x_max - det_range.x_min) / (hw[1] - 1)
    pitch_y = (det_range.y_max - det_range.y_min) / (hw[0] - 1)
    cx = det_range.x_min + (cells % hw[1]) * pitch_x
    cy = det_range.y_min + (cells // hw[1]) * pitch_y
    sums = np.zeros((len(cells), 4))
    np.add.at(sums, inverse, np.stack([pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]], axis=1))
    means = sums / counts[:, None]
    z_mid = 0.5 * (det_range.z_min + det_range.z_max)
    z_half = 0.5 * (det_range.z_max - det_range.z_min)
    stats = np.stack(
        [
            np.log1p(counts),
            (means[:, 0] - cx) / pitch_x,
            (means[:, 1] - cy) / pitch_y,
            (means[:, 2] - z_mid) / z_half,
            means[:, 3],
        ],
        axis=1,
    )
    return Pillars(cells, stats, hw)


@dataclass
class RadarCells:
    cells: np.ndarray  # Q flat cell ids
    inputs: np.ndarray  # Q×6 scaled point features
    hw: tuple


def radar_cells(radar: np.ndarray, cfg: ModelConfig) -> RadarCells:
    n = cfg.radar_grid
    hw = (n, n)
    pts = np.asarray(radar, dtype=np.float64).reshape(-1, 6)
    rng = cfg.det_range
    inside = rng.contains(pts[:, :3]) if len(pts) else np.zeros(0, dtype=bool)
    pts = pts[inside]
    row, col, _ = grid_cells(pts[:, :2], rng, hw)
    return RadarCells(row * n + col, pts / np.asarray(cfg.radar_input_scale), hw)


def prepare_images(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images)
    if images.ndim != 4:
        raise ValueError(f"images must be N×ch×H×W, got shape {images.shape}")
    return images - 0.5


# ------------------------------------------------------------------- encoders


class LidarEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        c = cfg.embed_dim
        self.cfg = cfg
        self.pillar_mlp = MLP(PILLAR_FEATURES, [cfg.pillar_hidden], c, rng, dt)
        self.stem = Conv2d(c, c, 3, rng, stride=cfg.lidar_stem_stride, dtype=dt)
        self.refine = Conv2d(c, c, 3, rng, stride=1, dtype=dt)
        self.downs = [Conv2d(c, c, 3, rng, stride=2, dtype=dt) for _ in range(cfg.num_scales - 1)]

    def pillar_grid(self, pillars: Pillars) -> Tensor:
        h, w = pillars.hw
        c = self.cfg.embed_dim
        if len(pillars.cells) == 0:
            return Tensor(np.zeros((c, h, w), dtype=self.cfg.np_dtype))
        emb = self.pillar_mlp(Tensor(pillars.stats.astype(self.cfg.np_dtype)))
        grid = dc.scatter_rows(emb, pillars.cells, h * w)  # (H·W)×C
        return grid.T.reshape(c, h, w)

    def __call__(self, pillars: Pillars) -> BevFeaturePyramid:
        base = self.pillar_grid(pillars)
        c, h, w = base.shape
        x = dc.relu(self.refine(dc.relu(self.stem(base.reshape(1, c, h, w)))))
        maps = [x]
        for conv in self.downs:
            x = dc.relu(conv(x))
            maps.append(x)
        return BevFeaturePyramid([m.reshape(m.shape[1:]) for m in maps], self.cfg.det_range, base=base)


class RadarEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.point_mlp = MLP(6, [cfg.radar_hidden], cfg.radar_dim, rng, cfg.np_dtype)  # Φ_rad

    def embed(self, inputs: np.ndarray) -> Tensor:
        return self.point_mlp(Tensor(np.asarray(inputs, dtype=self.cfg.np_dtype)))

    def __call__(self, cells: RadarCells) -> RadarBevMap:
        h, w = cells.hw
        co = self.cfg.radar_dim
        if len(cells.cells) == 0:
            grid = Tensor(np.zeros((co, h, w), dtype=self.cfg.np_dtype))
        else:
            pooled = dc.scatter_max(self.embed(cells.inputs), cells.cells, h * w)
            grid = pooled.T.reshape(co, h, w)
        pillar = (self.cfg.range_max[0] - self.cfg.range_min[0]) / max(w - 1, 1)
        return RadarBevMap(grid, pillar, self.cfg.det_range)


class CameraEncoder(Module):
    """Shared-weight conv stack: stride 2 stem, then one stride-2 stage per extra scale."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        c = cfg.embed_dim
        self.cfg = cfg
        self.stem = Conv2d(3, c, 3, rng, stride=2, dtype=dt)
        self.refine = Conv2d(c, c, 3, rng, stride=1, dtype=dt)
        self.downs = [Conv2d(c, c, 3, rng, stride=2, dtype=dt) for _ in range(cfg.num_scales - 1)]

    def __call__(self, images: np.ndarray, calibs: List[CameraCalib]) -> CameraFeaturePyramids:
        images = np.asarray(images)
        if images.ndim != 4:
            raise ValueError(f"images must be N×ch×H×W, got shape {images.shape}")
        if len({tuple(im.shape) for im in images}) > 1:
            raise ValueError("all camera images must share one size")
        x = Tensor(images.astype(self.cfg.np_dtype))
        x = dc.relu(self.refine(dc.relu(self.stem(x))))
        maps = [x]
        for conv in self.downs:
            x = dc.relu(conv(x))
            maps.append(x)
        img_h = images.shape[2]
        strides = [img_h / m.shape[2] for m in maps]
        return CameraFeaturePyramids(maps, list(calibs), strides)


# ------------------------------------------------------------ functional api


def encode_lidar(encoder: LidarEncoder, points: np.ndarray) -> BevFeaturePyramid:
    return encoder(pillarize(points, encoder.cfg.det_range, encoder.cfg.bev_size))


def encode_radar(encoder: RadarEncoder, radar: np.ndarray) -> RadarBevMap:
    return encoder(radar_cells(radar, encoder.cfg))


def encode_images(encoder: CameraEncoder, images: np.ndarray, calibs: List[CameraCalib]) -> CameraFeaturePyramids:
    return encoder(prepare_images(images), calibs)
