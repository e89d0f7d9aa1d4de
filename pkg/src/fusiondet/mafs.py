"""Query-based, modality-agnostic feature sampling and fusion.

Each query carries an embedding and a normalised 3-D reference point. The
sampler reads every configured modality at that point: deformable bilinear
sampling on the LiDAR BEV pyramid and the radar BEV map (offsets and softmax
weights decoded from the query), and a sigmoid-weighted sum over cameras and
scales at the point's image projection. The samples are concatenated in the
order LiDAR, camera, radar, passed through the fusion MLP, and added to the
query together with a positional encoding of the reference point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import diffcore as dc
from .diffcore import Linear, Module, Tensor
from .diffcore.nn import MLP, param
from .encoders import BevFeaturePyramid, CameraFeaturePyramids, RadarBevMap
from .geom import bev_project, denormalize_point, project_points
from .pipeline.config import ModelConfig


class ModalityError(ValueError):
    pass


@dataclass
class QueryState:
    embedding: Tensor  # N_q×C
    ref_points: Tensor  # N_q×3 in [0, 1]


def _ring_offsets(n_scales: int, n_points: int, radius: float = 1.0) -> np.ndarray:
    """Initial offset biases: K points spread on a ring, radius growing with k."""
    ang = 2.0 * math.pi * np.arange(n_points) / n_points
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1) * (np.arange(n_points)[:, None] + 1) * radius
    return np.broadcast_to(ring, (n_scales, n_points, 2)).reshape(-1)


class PositionalEncoder(Module):
    """Fixed sinusoids per axis (``bands`` octaves) followed by a learned projection."""

    def __init__(self, bands: int, out_dim: int, rng, dtype=np.float64):
        self.bands = bands
        self.freqs = (2.0 ** np.arange(bands)) * math.pi
        self.proj = Linear(3 * 2 * bands, out_dim, rng, dtype)
        self.dtype = dtype

    def raw(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64).reshape(-1, 3)
        ang = c[:, :, None] * self.freqs[None, None, :]  # N×3×B
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=2).reshape(len(c), -1)

    def __call__(self, c: np.ndarray) -> Tensor:
        return self.proj(Tensor(self.raw(c).astype(self.dtype)))


def positional_encode(encoder: PositionalEncoder, c: np.ndarray) -> Tensor:
    return encoder(c)


class MAFS(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        if not cfg.modalities:
            raise ModalityError("the sampler needs at least one configured modality")
        dt = cfg.np_dtype
        c = cfg.embed_dim
        m, k = cfg.num_scales, cfg.num_points
        self.cfg = cfg
        self.modalities = tuple(cfg.modalities)
        width = 0
        if "lidar" in self.modalities:
            self.lid_offsets = Linear(c, m * k * 2, rng, dt)
            self.lid_offsets.weight.data[:] = 0.0
            self.lid_offsets.bias.data[:] = _ring_offsets(m, k, cfg.offset_radius)
            self.lid_weights = Linear(c, m * k, rng, dt)
            self.lid_weights.weight.data[:] = 0.0
            self.lid_weights.bias.data[:] = 0.0
            width += c
        if "camera" in self.modalities:
            self.cam_weights = Linear(c, cfg.num_cameras * m, rng, dt)
            width += c
        if "radar" in self.modalities:
            self.rad_offsets = Linear(c, k * 2, rng, dt)
            self.rad_offsets.weight.data[:] = 0.0
            self.rad_offsets.bias.data[:] = _ring_offsets(1, k, cfg.offset_radius)
            self.rad_weights = Linear(c, k, rng, dt)
            self.rad_weights.weight.data[:] = 0.0
            self.rad_weights.bias.data[:] = 0.0
            width += cfg.radar_dim
        self.fusion_width = width
        self.fusion = MLP(width, [c], c, rng, dt)  # Φ_fus
        self.pos = PositionalEncoder(cfg.pe_bands, c, rng, dt)

    # ----------------------------------------------------------------- lidar
    def sample_lidar(self, q: Tensor, c: np.ndarray, pyramid: BevFeaturePyramid) -> Tensor:
        n = q.shape[0]
        m, k = self.cfg.num_scales, self.cfg.num_points
        offsets = self.lid_offsets(q).reshape(n, m, k, 2)
        weights = dc.softmax(self.lid_weights(q), axis=-1).reshape(n, m * k, 1)
        samples = []
        for j in range(m):
            fmap = pyramid.level(j)
            _, h, w = fmap.shape
            base = np.repeat(bev_project(c, (h, w)), k, axis=0).astype(q.dtype)
            coords = offsets[:, j].reshape(n * k, 2) + base
            samples.append(dc.bilinear_sample(fmap, coords, "clamp").reshape(n, k, -1))
        stacked = dc.concat(samples, axis=1) if m > 1 else samples[0]  # N×(m·K)×C
        return (stacked * weights).sum(axis=1)

    # ----------------------------------------------------------------- radar
    def sample_radar(self, q: Tensor, c: np.ndarray, radar: RadarBevMap) -> Tensor:
        n = q.shape[0]
        k = self.cfg.num_points
        fmap = radar.get()
        _, h, w = fmap.shape
        offsets = self.rad_offsets(q).reshape(n * k, 2)
        weights = dc.softmax(self.rad_weights(q), axis=-1).reshape(n, k, 1)
        base = np.repeat(bev_project(c, (h, w)), k, axis=0).astype(q.dtype)
        sampled = dc.bilinear_sample(fmap, offsets + base, "clamp").reshape(n, k, -1)
        return (sampled * weights).sum(axis=1)

    # ---------------------------------------------------------------- camera
    def camera_weights(self, q: Tensor) -> Tensor:
        return dc.sigmoid(self.cam_weights(q))  # N_q × (N_cam · m), camera-major

    def sample_cameras(self, q: Tensor, c: np.ndarray, cams: CameraFeaturePyramids) -> Tensor:
        n = q.shape[0]
        m = self.cfg.num_scales
        n_cam = cams.num_cameras
        if n_cam != self.cfg.num_cameras:
            raise ModalityError(f"model expects {self.cfg.num_cameras} cameras, got {n_cam}")
        sigma = self.camera_weights(q).reshape(n, n_cam, m)
        world = denormalize_point(c, self.cfg.det_range)
        total: Optional[Tensor] = None
        levels = [cams.level(j) for j in range(m)]
        for cam_idx, calib in enumerate(cams.calibs):
            uv, _, visible = project_points(world, calib)
            if not visible.any():
                continue
            mask = visible.astype(q.dtype)[:, None]
            for j in range(m):
                fmap = levels[j][cam_idx]  # C×H_j×W_j
                stride = cams.strides[j]
                coords = ((uv + 0.5) / stride - 0.5).astype(q.dtype)
                feat = dc.bilinear_sample(fmap, coords, "clamp")
                term = feat * sigma[:, cam_idx, j : j + 1] * mask
                total = term if total is None else total + term
        if total is None:
            return Tensor(np.zeros((n, levels[0].shape[1]), dtype=q.dtype))
        return total

    # ---------------------------------------------------------------- fusion
    def sample_all(self, q: Tensor, c: np.ndarray, features: Dict[str, object]) -> List[Tensor]:
        parts = []
        for name in self.modalities:
            if name not in features or features[name] is None:
                raise ModalityError(f"configured modality {name!r} has no features")
        if "lidar" in self.modalities:
            parts.append(self.sample_lidar(q, c, features["lidar"]))
        if "camera" in self.modalities:
            parts.append(self.sample_cameras(q, c, features["camera"]))
        if "radar" in self.modalities:
            parts.append(self.sample_radar(q, c, features["radar"]))
        return parts

    def fuse_and_update(self, q: Tensor, c: np.ndarray, parts: List[Tensor]) -> Tensor:
        fused_in = dc.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        if fused_in.shape[-1] != self.fusion_width:
            raise ModalityError(f"fusion input width {fused_in.shape[-1]} != configured {self.fusion_width}")
        delta = self.fusion(fused_in) + self.pos(c)
        return q + delta

    def __call__(self, q: Tensor, c: np.ndarray, features: Dict[str, object]) -> Tensor:
        return self.fuse_and_update(q, c, self.sample_all(q, c, features))


def init_queries(cfg: ModelConfig, seed: int) -> tuple:
    """Learned query embeddings and reference-point logits (sigmoid → [0, 1]³)."""
    if cfg.num_queries < 1:
        raise ValueError("need at least one query")
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    emb = param(rng.normal(0.0, 1.0, size=(cfg.num_queries, cfg.embed_dim)), dt)
    u = rng.uniform(0.02, 0.98, size=(cfg.num_queries, 3))
    logits = param(np.log(u / (1.0 - u)), dt)
    return emb, logits
