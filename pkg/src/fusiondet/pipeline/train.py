"""Training loop, checkpoints with optimizer moments, and the per-step log."""

from __future__ import annotations

import contextlib
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import diffcore as dc
from ..dethead import DetectionDump, Detector, SensorInputs, forward, predict, prepare_inputs
from ..diffcore import OptimizerState, load_checkpoint, optimizer_step, restore_parameters, save_checkpoint
from ..diffcore.optim import NonFiniteGradient
from ..evalkit import MetricsReport, evaluate
from ..setloss import LossBreakdown, aux_dense_loss, set_loss
from ..simkit import PRESETS, read_dataset, reduce_beams
from .config import RunConfig

log = logging.getLogger(__name__)

JOINT_TRAINING_NOTE = "single joint run of all configured encoders and the decoder (no separate backbone pre-training)"


class TrainingAborted(RuntimeError):
    def __init__(self, msg: str, checkpoint: Optional[Path]):
        super().__init__(msg)
        self.checkpoint = checkpoint


# ------------------------------------------------------------------ log


@dataclass
class TrainLog:
    steps: List[int] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    losses: List[LossBreakdown] = field(default_factory=list)
    epochs: List[tuple] = field(default_factory=list)  # (epoch, step, mAP, NDS)
    notes: List[str] = field(default_factory=list)

    def record(self, step: int, lr: float, bd: LossBreakdown) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"step {step} does not follow {self.steps[-1]}")
        self.steps.append(step)
        self.lrs.append(lr)
        self.losses.append(bd)

    def totals(self) -> np.ndarray:
        return np.array([b.total for b in self.losses])

    def main_losses(self) -> np.ndarray:
        return np.array([b.main for b in self.losses])

    def to_text(self) -> str:
        lines = [f"# note {n}" for n in self.notes]
        for s, lr, bd in zip(self.steps, self.lrs, self.losses):
            parts = [f"step={s}", f"lr={lr!r}"] + [f"{k}={v!r}" for k, v in bd.as_dict().items()]
            lines.append(" ".join(parts))
        for e, s, m, n in self.epochs:
            lines.append(f"epoch={e} step={s} val_mAP={m!r} val_NDS={n!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "TrainLog":
        out = cls()
        for line in Path(path).read_text().splitlines():
            if line.startswith("# note "):
                out.notes.append(line[len("# note ") :])
                continue
            if not line.strip():
                continue
            kv = dict(tok.split("=", 1) for tok in line.split())
            if "epoch" in kv:
                out.epochs.append((int(kv["epoch"]), int(kv["step"]), float(kv["val_mAP"]), float(kv["val_NDS"])))
                continue
            n_layers = sum(1 for k in kv if k.startswith("cls_"))
            bd = LossBreakdown(
                cls=[float(kv[f"cls_{i}"]) for i in range(n_layers)],
                reg=[float(kv[f"reg_{i}"]) for i in range(n_layers)],
                aux=float(kv["aux"]),
                total=float(kv["total"]),
            )
            out.record(int(kv["step"]), float(kv["lr"]), bd)
        return out


# ------------------------------------------------------------ determinism


@contextlib.contextmanager
def single_threaded(enabled: bool = True):
    """Pin BLAS to one thread so reductions run in a fixed order."""
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


# ------------------------------------------------------------------- data


def load_samples(directory, preset: str = "full") -> list:
    samples = read_dataset(directory)
    if preset != "full":
        if preset not in PRESETS:
            raise ValueError(f"unknown LiDAR preset {preset!r}; choose from {sorted(PRESETS)}")
        for s in samples:
            s.lidar = reduce_beams(s.lidar, PRESETS[preset])
    return samples


def batch_indices(step: int, n: int, batch_size: int, seed: int) -> np.ndarray:
    """Scenes for 0-based ``step``: one shuffled pass per epoch, a pure function of (step, seed)."""
    per_epoch = max(1, math.ceil(n / batch_size))
    epoch, k = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    if n <= batch_size:
        return np.resize(perm, batch_size)
    idx = perm[k * batch_size : (k + 1) * batch_size]
    if len(idx) < batch_size:  # wrap the short last batch
        idx = np.concatenate([idx, perm[: batch_size - len(idx)]])
    return idx


def steps_per_epoch(n: int, batch_size: int) -> int:
    return max(1, math.ceil(n / batch_size))


# ------------------------------------------------------------- checkpoint


def make_optimizer(cfg: RunConfig) -> OptimizerState:
    cycle = cfg.optim.cycle_steps or cfg.train.steps
    return OptimizerState(
        base_lr=cfg.optim.base_lr,
        max_lr=cfg.optim.max_lr,
        cycle_length=cycle,
        weight_decay=cfg.optim.weight_decay,
        grad_clip=cfg.optim.grad_clip,
    )


def write_training_checkpoint(path, model: Detector, opt: OptimizerState, cfg: RunConfig) -> None:
    arrays = [(f"param.{n}", p) for n, p in model.named_parameters()]
    arrays += [(f"adam_m.{n}", m) for n, m in sorted(opt.m.items())]
    arrays += [(f"adam_v.{n}", v) for n, v in sorted(opt.v.items())]
    meta = {"step": opt.step, "config": cfg.to_ini()}
    tmp = Path(str(path) + ".tmp")
    save_checkpoint(tmp, arrays, meta)
    os.replace(tmp, path)


def read_training_checkpoint(path, model: Optional[Detector] = None) -> tuple:
    """Load (model, optimizer state, config); parameters and moments restored exactly."""
    arrays, meta = load_checkpoint(path)
    cfg = RunConfig.from_ini(meta["config"], env={})
    model = model or Detector(cfg.model)
    params = {k[len("param.") :]: v for k, v in arrays.items() if k.startswith("param.")}
    restore_parameters(model.named_parameters(), params)
    opt = make_optimizer(cfg)
    opt.step = int(meta["step"])
    dt = cfg.model.np_dtype
    opt.m = {k[len("adam_m.") :]: v.astype(dt) for k, v in arrays.items() if k.startswith("adam_m.")}
    opt.v = {k[len("adam_v.") :]: v.astype(dt) for k, v in arrays.items() if k.startswith("adam_v.")}
    return model, opt, cfg


def load_model(path) -> tuple:
    model, _, cfg = read_training_checkpoint(path)
    return model, cfg


# ------------------------------------------------------------------ steps


def scene_loss(model: Detector, inputs: SensorInputs, sample, cfg: RunConfig) -> tuple:
    feats = model.encode(inputs)
    preds = forward(model, feats)
    aux = None
    if "lidar" in cfg.model.modalities and cfg.model.aux_head:
        aux = aux_dense_loss(model, feats["lidar"], sample.gt_boxes, cfg.loss)
    return set_loss(preds, sample.gt_boxes, cfg.model, cfg.loss, sample.velocity_available, aux)


def train_step(model: Detector, opt: OptimizerState, batch: Sequence, inputs: Sequence[SensorInputs], cfg: RunConfig) -> tuple:
    """Mean loss over the batch, one backward, one AdamW update. Returns (lr, breakdown)."""
    total = None
    parts = []
    for sample, inp in zip(batch, inputs):
        loss, bd = scene_loss(model, inp, sample, cfg)
        parts.append(bd)
        total = loss if total is None else total + loss
    total = total / float(len(batch))
    bd = LossBreakdown.merge(parts)
    if not np.isfinite(total.data):
        raise FloatingPointError(f"non-finite loss {float(total.data)}")
    model.zero_grad()
    total.backward()
    lr = optimizer_step(opt, model.named_parameters())
    return lr, bd


@dataclass
class TrainResult:
    model: Detector
    log: TrainLog
    checkpoint: Optional[Path]
    seconds: float


def train(
    cfg: RunConfig,
    samples: Sequence,
    out_dir=None,
    resume_from=None,
    val_samples: Optional[Sequence] = None,
    class_names: Optional[Sequence[str]] = None,
    on_step: Optional[Callable[[int, float, LossBreakdown], None]] = None,
) -> TrainResult:
    """Train ``cfg.train.steps`` AdamW steps over ``samples``.

    Writes ``checkpoint.bin`` to ``out_dir`` every epoch (or every
    ``checkpoint_every`` steps) and at the end. A non-finite loss or gradient
    stops training; the last checkpoint on disk is left untouched.
    """
    if not samples:
        raise ValueError("training needs at least one scene")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
    ckpt_path = out / "checkpoint.bin" if out is not None else None
    t0 = time.perf_counter()
    with single_threaded(cfg.train.deterministic):
        if resume_from is not None:
            model, opt, _ = read_training_checkpoint(resume_from)
        else:
            model, opt = Detector(cfg.model), make_optimizer(cfg)
        inputs = [prepare_inputs(s, cfg.model) for s in samples]
        val_inputs = [prepare_inputs(s, cfg.model) for s in val_samples] if val_samples else None
        tlog = TrainLog(notes=[JOINT_TRAINING_NOTE])
        n, bs = len(samples), cfg.train.batch_size
        per_epoch = steps_per_epoch(n, bs)
        ckpt_every = cfg.train.checkpoint_every or per_epoch
        last_good = None
        while opt.step < cfg.train.steps:
            step = opt.step
            idx = batch_indices(step, n, bs, cfg.train.seed)
            try:
                lr, bd = train_step(model, opt, [samples[i] for i in idx], [inputs[i] for i in idx], cfg)
            except (FloatingPointError, NonFiniteGradient) as exc:
                raise TrainingAborted(f"step {step + 1}: {exc}", last_good) from exc
            tlog.record(opt.step, lr, bd)
            if on_step is not None:
                on_step(opt.step, lr, bd)
            if cfg.train.log_every and opt.step % cfg.train.log_every == 0:
                log.info("step %d lr %.3g loss %.4f", opt.step, lr, bd.total)
            if ckpt_path is not None and (opt.step % ckpt_every == 0 or opt.step == cfg.train.steps):
                write_training_checkpoint(ckpt_path, model, opt, cfg)
                last_good = ckpt_path
            if val_inputs and cfg.train.eval_every_epochs and opt.step % (per_epoch * cfg.train.eval_every_epochs) == 0:
                rep = evaluate_model(model, val_samples, cfg, class_names, inputs=val_inputs, breakdowns=False)
                tlog.epochs.append((opt.step // per_epoch, opt.step, rep.mean_ap, rep.nds))
        if out is not None:
            tlog.save(out / "train_log.txt")
    return TrainResult(model, tlog, last_good, time.perf_counter() - t0)


# ------------------------------------------------------------- inference


def run_inference(model: Detector, samples: Sequence, cfg: RunConfig, inputs: Optional[Sequence[SensorInputs]] = None) -> DetectionDump:
    dump = DetectionDump()
    with single_threaded(cfg.train.deterministic):
        for i, s in enumerate(samples):
            inp = inputs[i] if inputs is not None else None
            dump.add(s.scene_id, predict(model, s, cfg.train.score_threshold, cfg.train.max_dets, inputs=inp))
    return dump


def evaluate_model(model: Detector, samples: Sequence, cfg: RunConfig, class_names: Optional[Sequence[str]] = None, inputs=None, breakdowns: bool = True) -> MetricsReport:
    dump = run_inference(model, samples, cfg, inputs)
    names = list(class_names) if class_names else [f"class{i}" for i in range(cfg.model.num_classes)]
    gts = {s.scene_id: s.gt_boxes for s in samples}
    return evaluate(dump, gts, names, breakdowns=breakdowns)
