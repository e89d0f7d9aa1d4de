"""Transformer decoder with per-layer heads and iterative reference-point refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Conv2d, FeedForward, Module, SelfAttention, Tensor
from .diffcore.nn import MLP
from .encoders import (
    CameraEncoder,
    LidarEncoder,
    RadarEncoder,
    prepare_images,
    pillarize,
    radar_cells,
)
from .geom import Box3D, denormalize_point, normalize_point, sincos_to_yaw
from .mafs import MAFS, ModalityError, init_queries
from .pipeline.config import ModelConfig

REG_DIM = 10  # Δc (3), log w/h/l (3), sin, cos, vx, vy
PRIOR_PROB = 0.01


@dataclass
class LayerPrediction:
    logits: Tensor  # N_q×n_classes
    box_vec: Tensor  # N_q×10: refined normalised centre, log size, sin, cos, vx, vy
    ref_points: np.ndarray  # N_q×3 refined points, input to the next layer

    def boxes(self, cfg: ModelConfig) -> List[Box3D]:
        return decode_boxes(self.box_vec.data, np.argmax(self.logits.data, axis=1), cfg)


def decode_boxes(vec: np.ndarray, class_ids: np.ndarray, cfg: ModelConfig) -> List[Box3D]:
    vec = np.asarray(vec, dtype=np.float64)
    centers = denormalize_point(vec[:, :3], cfg.det_range)
    sizes = np.exp(np.clip(vec[:, 3:6], -10.0, 10.0))
    out = []
    for i in range(len(vec)):
        s, c = vec[i, 6], vec[i, 7]
        yaw = 0.0 if s == 0 and c == 0 else sincos_to_yaw(s, c)
        out.append(Box3D(tuple(centers[i]), tuple(sizes[i]), yaw, (float(vec[i, 8]), float(vec[i, 9])), int(class_ids[i])))
    return out


def encode_targets(boxes: Sequence[Box3D], cfg: ModelConfig) -> np.ndarray:
    """Ground-truth boxes → K×10 regression targets in the prediction layout."""
    if not boxes:
        return np.zeros((0, REG_DIM))
    arr = np.stack([b.to_array() for b in boxes])
    c = normalize_point(arr[:, :3], cfg.det_range)
    return np.concatenate(
        [c, np.log(arr[:, 3:6]), np.sin(arr[:, 6:7]), np.cos(arr[:, 6:7]), arr[:, 7:9]], axis=1
    )


class DecoderBlock(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        c = cfg.embed_dim
        self.sampler = MAFS(cfg, rng)
        self.attn = SelfAttention(c, cfg.attn_heads, rng, dt)
        self.ffn = FeedForward(c, cfg.ffn_hidden, rng, dt)
        self.reg = MLP(c, [c], REG_DIM, rng, dt)  # Φ_reg
        self.cls = MLP(c, [c], cfg.num_classes, rng, dt)  # Φ_cls
        self.reg.layers[-1].weight.data[:] = 0.0
        self.reg.layers[-1].bias.data[:] = 0.0
        self.reg.layers[-1].bias.data[7] = 1.0  # yaw starts at 0 rather than undefined
        self.cls.layers[-1].bias.data[:] = -math.log((1.0 - PRIOR_PROB) / PRIOR_PROB)


def decode_layer(block: DecoderBlock, queries: Tensor, c: Tensor, features: Dict[str, object]) -> tuple:
    """One decoder block: sample + fuse → self-attention → FFN → heads → refine.

    ``c`` is the N_q×3 reference-point tensor entering the block. Sampling uses
    its value only; the refined point c + Δx (clamped to [0, 1]) carries
    gradient into the regression loss.
    """
    c_val = c.data
    q = block.sampler(queries, c_val, features)
    q = block.attn(q)
    q = block.ffn(q)
    reg = block.reg(q)
    logits = block.cls(q)
    refined = dc.clamp(c + reg[:, 0:3], 0.0, 1.0)
    box_vec = dc.concat([refined, reg[:, 3:]], axis=-1)
    return q, LayerPrediction(logits, box_vec, refined.data.copy())


class Detector(Module):
    """Encoders for the configured modalities, learned queries, L decoder blocks."""

    def __init__(self, cfg: ModelConfig):
        if not cfg.modalities:
            raise ModalityError("model construction needs at least one modality")
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        if "lidar" in cfg.modalities:
            self.lidar_encoder = LidarEncoder(cfg, rng)
        if "radar" in cfg.modalities:
            self.radar_encoder = RadarEncoder(cfg, rng)
        if "camera" in cfg.modalities:
            self.camera_encoder = CameraEncoder(cfg, rng)
        self.query_embed, self.ref_logits = init_queries(cfg, cfg.seed + 1)
        self.blocks = [DecoderBlock(cfg, rng) for _ in range(cfg.num_layers)]
        if "lidar" in cfg.modalities and cfg.aux_head:
            self.aux_head = Conv2d(cfg.embed_dim, 1, 1, rng, dtype=cfg.np_dtype)
            self.aux_head.bias.data[:] = -math.log((1.0 - PRIOR_PROB) / PRIOR_PROB)

    def inference_parameters(self) -> list:
        return [(n, p) for n, p in self.named_parameters() if not n.startswith("aux_head.")]

    # --------------------------------------------------------------- encoding
    def encode(self, inputs: "SensorInputs") -> Dict[str, object]:
        feats: Dict[str, object] = {}
        if "lidar" in self.cfg.modalities:
            feats["lidar"] = self.lidar_encoder(inputs.pillars)
        if "camera" in self.cfg.modalities:
            feats["camera"] = self.camera_encoder(inputs.images, inputs.calibs)
        if "radar" in self.cfg.modalities:
            feats["radar"] = self.radar_encoder(inputs.radar)
        return feats

    def initial_reference(self) -> Tensor:
        return dc.sigmoid(self.ref_logits)


def forward(model: Detector, features: Dict[str, object]) -> List[LayerPrediction]:
    """Run all L blocks; layer ℓ + 1 starts from layer ℓ's refined points."""
    q = model.query_embed
    c = model.initial_reference()
    preds = []
    for block in model.blocks:
        q, pred = decode_layer(block, q, c, features)
        preds.append(pred)
        c = Tensor(pred.ref_points)
    return preds


# ------------------------------------------------------------------- inputs


@dataclass
class SensorInputs:
    """Non-learned preprocessing of one scene, cached across training steps."""

    pillars: object = None
    radar: object = None
    images: Optional[np.ndarray] = None
    calibs: list = field(default_factory=list)


def prepare_inputs(sample, cfg: ModelConfig) -> SensorInputs:
    inputs = SensorInputs(calibs=list(sample.calibs))
    if "lidar" in cfg.modalities:
        inputs.pillars = pillarize(sample.lidar, cfg.det_range, cfg.bev_size)
    if "radar" in cfg.modalities:
        inputs.radar = radar_cells(sample.radar, cfg)
    if "camera" in cfg.modalities:
        inputs.images = prepare_images(sample.images).astype(cfg.np_dtype)
    return inputs


# --------------------------------------------------------------- prediction


@dataclass
class Detection:
    class_id: int
    score: float
    box: Box3D


@dataclass
class DetectionDump:
    scenes: Dict[str, List[Detection]] = field(default_factory=dict)

    def add(self, scene_id: str, dets: List[Detection]) -> None:
        self.scenes[scene_id] = sorted(dets, key=lambda d: -d.score)

    def __len__(self) -> int:
        return sum(len(v) for v in self.scenes.values())


def select_detections(pred: LayerPrediction, cfg: ModelConfig, score_threshold: float, max_dets: int) -> List[Detection]:
    """Top-scoring queries of one layer; score = max class sigmoid. No NMS."""
    if max_dets <= 0:
        return []
    logits = pred.logits.data.astype(np.float64)
    with np.errstate(over="ignore"):
        probs = 1.0 / (1.0 + np.exp(-logits))
    cls = np.argmax(probs, axis=1)
    scores = probs[np.arange(len(probs)), cls]
    order = np.argsort(-scores, kind="stable")
    order = [i for i in order if scores[i] > score_threshold][:max_dets]
    if not order:
        return []
    boxes = decode_boxes(pred.box_vec.data[order], cls[order], cfg)
    return [Detection(int(cls[i]), float(scores[i]), b) for i, b in zip(order, boxes)]


def predict(model: Detector, sample, score_threshold: float = 0.05, max_dets: int = 30, inputs: Optional[SensorInputs] = None) -> List[Detection]:
    with dc.no_grad():
        inputs = inputs or prepare_inputs(sample, model.cfg)
        preds = forward(model, model.encode(inputs))
    return select_detections(preds[-1], model.cfg, score_threshold, max_dets)


# ------------------------------------------------------------- dump file io

DUMP_FIELDS = ("scene_id", "class_id", "score", "x", "y", "z", "w", "h", "l", "yaw", "vx", "vy")


def write_dump(dump: DetectionDump, path) -> None:
    lines = ["# " + " ".join(DUMP_FIELDS)]
    for scene_id in sorted(dump.scenes):
        if not dump.scenes[scene_id]:
            lines.append(scene_id)  # a bare id keeps scenes without detections
        for d in dump.scenes[scene_id]:
            b = d.box
            nums = [d.score, *b.center, *b.size, b.yaw, *b.velocity]
            lines.append(f"{scene_id} {d.class_id} " + " ".join(f"{v:.6f}" for v in nums))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dump(path) -> DetectionDump:
    dump = DetectionDump()
    per_scene: Dict[str, List[Detection]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) == 1:
            per_scene.setdefault(parts[0], [])
            continue
        if len(parts) != len(DUMP_FIELDS):
            raise ValueError(f"{path}:{lineno}: expected {len(DUMP_FIELDS)} fields, got {len(parts)}")
        v = [float(x) for x in parts[2:]]
        size = tuple(max(s, 1e-6) for s in v[4:7])
        box = Box3D(tuple(v[1:4]), size, v[7], (v[8], v[9]), int(parts[1]))
        per_scene.setdefault(parts[0], []).append(Detection(int(parts[1]), v[0], box))
    for sid, dets in per_scene.items():
        dump.add(sid, dets)
    return dump
