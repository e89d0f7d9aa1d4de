"""Run configuration: dataclass sections, INI (key = value) round trip, env overrides.

Every value that shapes a run lives here, including the small desk-scale
defaults, so a config file fully determines a run.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np

from ..geom import DetectionRange

ENV_PREFIX = "FUSIONDET_"
MODALITIES = ("lidar", "camera", "radar")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    modalities: Tuple[str, ...] = ("lidar", "camera")
    embed_dim: int = 32  # C
    radar_dim: int = 16  # C_ro
    num_scales: int = 2  # m
    num_points: int = 2  # K
    num_layers: int = 2  # L
    num_queries: int = 30  # N_q
    num_classes: int = 3
    attn_heads: int = 4
    ffn_hidden: int = 64
    pe_bands: int = 10
    bev_size: int = 64  # base LiDAR grid is bev_size × bev_size
    range_min: Tuple[float, float, float] = (-32.0, -32.0, -3.0)
    range_max: Tuple[float, float, float] = (32.0, 32.0, 5.0)
    radar_pillar: float = 2.0
    radar_input_scale: Tuple[float, ...] = (32.0, 32.0, 4.0, 10.0, 10.0, 10.0)
    pillar_hidden: int = 32
    lidar_stem_stride: int = 1  # 2 halves the finest BEV level relative to the pillar grid
    offset_radius: float = 1.0  # initial sampling ring radius, feature pixels
    radar_hidden: int = 32
    num_cameras: int = 2
    image_size: Tuple[int, int] = (64, 64)  # (H, W)
    aux_head: bool = True
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.modalities = tuple(self.modalities)
        if not self.modalities:
            raise ConfigError("at least one modality must be configured")
        bad = set(self.modalities) - set(MODALITIES)
        if bad:
            raise ConfigError(f"unknown modalities {sorted(bad)}")
        self.modalities = tuple(m for m in MODALITIES if m in self.modalities)
        for name in ("embed_dim", "radar_dim", "num_scales", "num_points", "num_layers", "num_queries", "num_classes", "bev_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lidar_stem_stride not in (1, 2):
            raise ConfigError("lidar_stem_stride must be 1 or 2")
        if self.bev_size % (self.lidar_stem_stride * 2 ** (self.num_scales - 1)):
            raise ConfigError("bev_size must halve exactly across scales")
        self.range_min = tuple(float(v) for v in self.range_min)
        self.range_max = tuple(float(v) for v in self.range_max)
        self.radar_input_scale = tuple(float(v) for v in self.radar_input_scale)
        self.image_size = tuple(int(v) for v in self.image_size)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def det_range(self) -> DetectionRange:
        return DetectionRange(*(v for pair in zip(self.range_min, self.range_max) for v in pair))

    @property
    def radar_grid(self) -> int:
        return max(1, int(round((self.range_max[0] - self.range_min[0]) / self.radar_pillar)))


@dataclass
class OptimConfig:
    base_lr: float = 1e-4
    max_lr: float = 1e-3
    cycle_steps: int = 0  # 0 → one cycle over the whole run
    weight_decay: float = 0.01
    grad_clip: float = 35.0


@dataclass
class LossConfig:
    cls_weight: float = 2.0
    l1_weight: float = 0.25
    aux_weight: float = 0.5
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    code_weights: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.2, 0.2)
    # scale the three center weights by the window extent so center L1 counts in metres;
    # in normalized units a 6 m miss costs ~0.1 and matching ignores location
    center_in_metres: bool = True

    def __post_init__(self):
        self.code_weights = tuple(float(v) for v in self.code_weights)
        if len(self.code_weights) != 10:
            raise ConfigError("code_weights must have 10 entries")


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    seed: int = 0
    deterministic: bool = True
    checkpoint_every: int = 0  # steps; 0 → once per epoch
    log_every: int = 10
    eval_every_epochs: int = 0
    score_threshold: float = 0.05
    max_dets: int = 30


@dataclass
class DataConfig:
    train_dir: str = ""
    val_dir: str = ""
    lidar_preset: str = "full"  # full | 4beam | 1beam


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    name: str = "run"

    # ------------------------------------------------------------------ io
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"name": self.name}
        for section in ("model", "optim", "loss", "train", "data"):
            obj = getattr(self, section)
            cp[section] = {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    @classmethod
    def from_ini(cls, text: str, env: dict | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        return cls._from_sections({s: dict(cp[s]) for s in cp.sections()}, env)

    @classmethod
    def load(cls, path, env: dict | None = None) -> "RunConfig":
        return cls.from_ini(Path(path).read_text(), env)

    @classmethod
    def _from_sections(cls, sections: dict, env: dict | None) -> "RunConfig":
        env = os.environ if env is None else env
        kinds = {"model": ModelConfig, "optim": OptimConfig, "loss": LossConfig, "train": TrainConfig, "data": DataConfig}
        known = set(kinds) | {"run"}
        unknown = set(sections) - known
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        built = {}
        for section, kind in kinds.items():
            raw = dict(sections.get(section, {}))
            fields = {f.name: f for f in dataclasses.fields(kind)}
            for key in raw:
                if key not in fields:
                    raise ConfigError(f"unknown key [{section}] {key}")
            for key in fields:
                env_key = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
                if env_key in env:
                    raw[key] = env[env_key]
            defaults = kind()
            values = {k: _parse(v, getattr(defaults, k), f"[{section}] {k}") for k, v in raw.items()}
            built[section] = kind(**values)
        name = sections.get("run", {}).get("name", "run")
        return cls(name=name, **built)

    def replace(self, **sections) -> "RunConfig":
        """Copy with section-level overrides, e.g. ``replace(model={"modalities": ("lidar",)})``."""
        kw = {}
        for section in ("model", "optim", "loss", "train", "data"):
            obj = getattr(self, section)
            kw[section] = dataclasses.replace(obj, **sections.get(section, {}))
        return RunConfig(name=sections.get("name", self.name), **kw)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return json.dumps(list(value))
    return str(value)


def _parse(text: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = text.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            text = text.strip()
            if text.startswith("["):
                return tuple(json.loads(text))
            return tuple(s.strip() for s in text.split(",") if s.strip())
        return text
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}") from exc


def full_scale_model() -> ModelConfig:
    """Full-scale hyperparameters, kept as a named preset (far too large to train on a CPU)."""
    return ModelConfig(
        modalities=("lidar", "camera", "radar"),
        embed_dim=256,
        radar_dim=64,
        num_scales=4,
        num_points=4,
        num_layers=6,
        num_queries=900,
        num_classes=10,
        radar_pillar=0.8,
        num_cameras=6,
        image_size=(900, 1600),
        bev_size=128,
    )
