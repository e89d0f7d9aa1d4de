"""Bipartite matching and the set-to-set training loss, plus the dense auxiliary head loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .dethead import Detector, LayerPrediction, encode_targets
from .encoders import BevFeaturePyramid, grid_cells
from .geom import Box3D
from .mafs import ModalityError
from .pipeline.config import LossConfig, ModelConfig


class MatchingError(ValueError):
    pass


# ------------------------------------------------------------------ matching


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def focal_cost(logits: np.ndarray, gt_classes: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    """N×K focal-style classification cost: positive minus negative focal term for each gt class."""
    x = np.asarray(logits, dtype=np.float64)[:, gt_classes]
    p = np.exp(_log_sigmoid(x))
    pos = -alpha * (1.0 - p) ** gamma * _log_sigmoid(x)
    neg = -(1.0 - alpha) * p**gamma * _log_sigmoid(-x)
    return pos - neg


def regression_weights(loss_cfg: LossConfig, velocity_available: bool, model_cfg: Optional[ModelConfig] = None) -> np.ndarray:
    """Per-dimension L1 weights; center dims in metres when configured and the window is known."""
    w = np.array(loss_cfg.code_weights, dtype=np.float64)
    if loss_cfg.center_in_metres and model_cfg is not None:
        w[:3] *= np.asarray(model_cfg.range_max, dtype=np.float64) - np.asarray(model_cfg.range_min, dtype=np.float64)
    if not velocity_available:
        w[8:10] = 0.0
    return w


def build_cost(
    pred: LayerPrediction,
    gts: Sequence[Box3D],
    model_cfg: ModelConfig,
    loss_cfg: Optional[LossConfig] = None,
    velocity_available: bool = True,
) -> np.ndarray:
    loss_cfg = loss_cfg or LossConfig()
    n = pred.logits.shape[0]
    if not gts:
        return np.zeros((n, 0))
    classes = np.array([b.class_id for b in gts], dtype=np.int64)
    targets = encode_targets(gts, model_cfg)
    w = regression_weights(loss_cfg, velocity_available, model_cfg)
    vec = pred.box_vec.data.astype(np.float64)
    l1 = (np.abs(vec[:, None, :] - targets[None, :, :]) * w).sum(axis=2)
    cls = focal_cost(pred.logits.data, classes, loss_cfg.focal_alpha, loss_cfg.focal_gamma)
    return loss_cfg.cls_weight * cls + loss_cfg.l1_weight * l1


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost injective assignment gt → prediction.

    ``cost`` is N_pred × N_gt with N_pred ≥ N_gt. Returns an int array of length
    N_gt whose entry j is the prediction assigned to gt j. Shortest augmenting
    paths with dual potentials, O(N_gt² · N_pred). Each gt column is shifted by
    its own minimum first, so adding a constant to the whole matrix changes
    nothing; among equal-cost choices the lowest prediction index is taken.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise MatchingError(f"cost must be 2-D, got shape {cost.shape}")
    n_pred, n_gt = cost.shape
    if n_gt == 0:
        return np.zeros(0, dtype=np.int64)
    if n_pred < n_gt:
        raise MatchingError(f"{n_gt} ground truths but only {n_pred} predictions")
    if not np.all(np.isfinite(cost)):
        raise MatchingError("cost matrix has non-finite entries")
    a = (cost - cost.min(axis=0, keepdims=True)).T  # rows = gts, cols = preds
    inf = np.inf
    u = np.zeros(n_gt + 1)
    v = np.zeros(n_pred + 1)
    owner = np.zeros(n_pred + 1, dtype=np.int64)  # owner[col] = 1-based gt row, 0 = free
    way = np.zeros(n_pred + 1, dtype=np.int64)
    for row in range(1, n_gt + 1):
        owner[0] = row
        j0 = 0
        minv = np.full(n_pred + 1, inf)
        used = np.zeros(n_pred + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            delta = inf
            j1 = -1
            for j in range(1, n_pred + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n_pred + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = np.full(n_gt, -1, dtype=np.int64)
    for j in range(1, n_pred + 1):
        if owner[j]:
            assign[owner[j] - 1] = j - 1
    return assign


def assignment_cost(cost: np.ndarray, assign: np.ndarray) -> float:
    total = 0.0
    for gt, pred in enumerate(assign):
        total += float(cost[pred, gt])
    return total


# ---------------------------------------------------------------------- loss


def focal_loss(logits: Tensor, target_class: np.ndarray, alpha: float = 0.25, gamma: float = 2.0, normalizer: Optional[float] = None) -> Tensor:
    """Sigmoid focal loss summed over queries and classes.

    ``target_class[i]`` is the class of query i, or −1 for an all-negative row.
    Divided by ``normalizer`` (default: number of positives, at least 1).
    """
    logits = dc.as_tensor(logits)
    target_class = np.asarray(target_class, dtype=np.int64)
    n, k = logits.shape
    t = np.zeros((n, k), dtype=logits.dtype)
    pos = target_class >= 0
    t[np.nonzero(pos)[0], target_class[pos]] = 1.0
    if normalizer is None:
        normalizer = max(int(pos.sum()), 1)
    p = dc.sigmoid(logits)
    log_p = dc.log_sigmoid(logits)
    log_q = dc.log_sigmoid(-logits)
    pos_term = alpha * dc.power(1.0 - p, gamma) * log_p * t
    neg_term = (1.0 - alpha) * dc.power(p, gamma) * log_q * (1.0 - t)
    return -(pos_term + neg_term).sum() / float(normalizer)


@dataclass
class LossBreakdown:
    cls: List[float] = field(default_factory=list)  # per layer, unweighted
    reg: List[float] = field(default_factory=list)
    aux: float = 0.0
    cls_weight: float = 2.0
    l1_weight: float = 0.25
    aux_weight: float = 0.5
    total: float = 0.0

    def recompute_total(self) -> float:
        return (
            self.cls_weight * sum(self.cls)
            + self.l1_weight * sum(self.reg)
            + self.aux_weight * self.aux
        )

    @property
    def main(self) -> float:
        """Decoder-head part of the total (everything except the auxiliary head)."""
        return self.total - self.aux_weight * self.aux

    def as_dict(self) -> Dict[str, float]:
        out = {"total": self.total, "aux": self.aux}
        for i, (c, r) in enumerate(zip(self.cls, self.reg)):
            out[f"cls_{i}"] = c
            out[f"reg_{i}"] = r
        return out

    @staticmethod
    def merge(parts: Sequence["LossBreakdown"]) -> "LossBreakdown":
        """Mean over a batch of per-scene breakdowns."""
        n = len(parts)
        first = parts[0]
        out = LossBreakdown(
            cls=[sum(p.cls[i] for p in parts) / n for i in range(len(first.cls))],
            reg=[sum(p.reg[i] for p in parts) / n for i in range(len(first.reg))],
            aux=sum(p.aux for p in parts) / n,
            cls_weight=first.cls_weight,
            l1_weight=first.l1_weight,
            aux_weight=first.aux_weight,
        )
        out.total = sum(p.total for p in parts) / n
        return out


def layer_loss(pred: LayerPrediction, gts: Sequence[Box3D], model_cfg: ModelConfig, loss_cfg: LossConfig, velocity_available: bool) -> tuple:
    """(classification, regression) loss tensors of one layer after matching."""
    n = pred.logits.shape[0]
    n_gt = len(gts)
    target_class = np.full(n, -1, dtype=np.int64)
    norm = max(n_gt, 1)
    if n_gt == 0:
        cls = focal_loss(pred.logits, target_class, loss_cfg.focal_alpha, loss_cfg.focal_gamma, norm)
        return cls, Tensor(np.zeros((), dtype=pred.box_vec.dtype))
    cost = build_cost(pred, gts, model_cfg, loss_cfg, velocity_available)
    assign = hungarian_match(cost)
    target_class[assign] = [b.class_id for b in gts]
    cls = focal_loss(pred.logits, target_class, loss_cfg.focal_alpha, loss_cfg.focal_gamma, norm)
    targets = encode_targets(gts, model_cfg).astype(pred.box_vec.dtype)
    w = regression_weights(loss_cfg, velocity_available, model_cfg).astype(pred.box_vec.dtype)
    matched = pred.box_vec[assign]
    reg = (dc.absolute(matched - targets) * w).sum() / float(norm)
    return cls, reg


def aux_targets(gts: Sequence[Box3D], model_cfg: ModelConfig, hw: tuple) -> np.ndarray:
    """H×W objectness map: 1 at the cell holding each gt centre."""
    t = np.zeros(hw)
    if gts:
        centers = np.array([b.center[:2] for b in gts], dtype=np.float64)
        row, col, inside = grid_cells(centers, model_cfg.det_range, hw)
        t[row[inside], col[inside]] = 1.0
    return t


def aux_dense_loss(model: Detector, lidar: Optional[BevFeaturePyramid], gts: Sequence[Box3D], loss_cfg: Optional[LossConfig] = None) -> Tensor:
    """Focal loss of the 1×1 objectness head on the finest LiDAR BEV scale."""
    loss_cfg = loss_cfg or LossConfig()
    if "lidar" not in model.cfg.modalities or lidar is None:
        raise ModalityError("the auxiliary dense head needs LiDAR features")
    if getattr(model, "aux_head", None) is None:
        raise ModalityError("the model was built without an auxiliary head")
    fmap = lidar.level(0)
    c, h, w = fmap.shape
    logits = model.aux_head(fmap.reshape(1, c, h, w)).reshape(h * w, 1)
    t = aux_targets(gts, model.cfg, (h, w)).reshape(-1)
    target_class = np.where(t > 0, 0, -1)
    return focal_loss(logits, target_class, loss_cfg.focal_alpha, loss_cfg.focal_gamma, max(len(gts), 1))


def set_loss(
    all_layer_preds: Sequence[LayerPrediction],
    gts: Sequence[Box3D],
    model_cfg: ModelConfig,
    loss_cfg: Optional[LossConfig] = None,
    velocity_available: bool = True,
    aux: Optional[Tensor] = None,
) -> tuple:
    """Sum over layers of 2.0·focal + 0.25·L1 (weights from ``loss_cfg``), plus 0.5·aux.

    Returns ``(total tensor, LossBreakdown)``.
    """
    loss_cfg = loss_cfg or LossConfig()
    bd = LossBreakdown(cls_weight=loss_cfg.cls_weight, l1_weight=loss_cfg.l1_weight, aux_weight=loss_cfg.aux_weight)
    total: Optional[Tensor] = None
    for pred in all_layer_preds:
        cls, reg = layer_loss(pred, gts, model_cfg, loss_cfg, velocity_available)
        bd.cls.append(float(cls.data))
        bd.reg.append(float(reg.data))
        term = cls * loss_cfg.cls_weight + reg * loss_cfg.l1_weight
        total = term if total is None else total + term
    if aux is not None:
        bd.aux = float(aux.data)
        total = total + aux * loss_cfg.aux_weight
    bd.total = bd.recompute_total()
    return total, bd
