"""Centre-distance detection metrics in the nuScenes style.

Detections match ground truths of their own class greedily in descending
score order, on BEV centre distance. AP integrates the interpolated precision
over recall in [0.1, 1] after removing a 0.1 precision floor. True-positive
error metrics are averaged over TPs at the 2 m threshold, and the composite
score drops the attribute term (no attributes exist here), so it weighs 9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..dethead import Detection, DetectionDump
from ..geom import Box3D

THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
TP_THRESHOLD = 2.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1
TP_METRICS = ("trans_err", "scale_err", "orient_err", "vel_err")
DISTANCE_BINS = ((0.0, 20.0), (20.0, 30.0), (30.0, math.inf))
SIZE_BINS = ((0.0, 4.0), (4.0, math.inf))


# ------------------------------------------------------------------ errors


def scale_error(a: Box3D, b: Box3D) -> float:
    """1 − IoU of the two size boxes after aligning centres and headings."""
    sa, sb = np.asarray(a.size), np.asarray(b.size)
    inter = float(np.prod(np.minimum(sa, sb)))
    union = float(np.prod(sa) + np.prod(sb) - inter)
    return 1.0 - inter / union


def yaw_error(a: float, b: float) -> float:
    d = abs(a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def bev_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


# ------------------------------------------------------------------ matching


@dataclass
class MatchRecord:
    """Greedy match outcome of one class at one threshold, sorted by descending score."""

    threshold: float
    class_id: int
    n_gt: int
    scores: np.ndarray
    is_tp: np.ndarray
    matched_gt: List[Optional[tuple]]  # (scene_id, gt index) for TPs
    det_keys: List[tuple]  # (scene_id, detection index) per record
    errors: Dict[str, np.ndarray]  # per record, nan for FPs

    def __len__(self) -> int:
        return len(self.scores)


def _class_detections(dump: DetectionDump, class_id: int) -> list:
    out = []
    for scene_id in sorted(dump.scenes):
        for k, d in enumerate(dump.scenes[scene_id]):
            if d.class_id == class_id:
                out.append((scene_id, k, d))
    # stable: ties keep scene / list order
    order = sorted(range(len(out)), key=lambda i: -out[i][2].score)
    return [out[i] for i in order]


def match_detections(dump: DetectionDump, gts: Mapping[str, Sequence[Box3D]], threshold: float, class_id: int) -> MatchRecord:
    """TP when an unmatched same-class gt lies within ``threshold`` m (≤); the closest one is taken."""
    dets = _class_detections(dump, class_id)
    gt_pool = {sid: [(i, b) for i, b in enumerate(boxes) if b.class_id == class_id] for sid, boxes in gts.items()}
    n_gt = sum(len(v) for v in gt_pool.values())
    taken = set()
    is_tp = np.zeros(len(dets), dtype=bool)
    matched: List[Optional[tuple]] = [None] * len(dets)
    errs = {k: np.full(len(dets), np.nan) for k in TP_METRICS}
    for r, (sid, k, det) in enumerate(dets):
        best, best_d = None, math.inf
        for gi, gt in gt_pool.get(sid, []):
            if (sid, gi) in taken:
                continue
            dist = bev_distance(det.box, gt)
            if dist <= threshold and dist < best_d:
                best, best_d = (gi, gt), dist
        if best is None:
            continue
        gi, gt = best
        taken.add((sid, gi))
        is_tp[r] = True
        matched[r] = (sid, gi)
        errs["trans_err"][r] = best_d
        errs["scale_err"][r] = scale_error(det.box, gt)
        errs["orient_err"][r] = yaw_error(det.box.yaw, gt.yaw)
        errs["vel_err"][r] = math.hypot(det.box.velocity[0] - gt.velocity[0], det.box.velocity[1] - gt.velocity[1])
    return MatchRecord(
        threshold=threshold,
        class_id=class_id,
        n_gt=n_gt,
        scores=np.array([d.score for _, _, d in dets], dtype=np.float64),
        is_tp=is_tp,
        matched_gt=matched,
        det_keys=[(sid, k) for sid, k, _ in dets],
        errors=errs,
    )


def subset_record(record: MatchRecord, keep: np.ndarray, n_gt: int) -> MatchRecord:
    keep = np.asarray(keep, dtype=bool)
    idx = np.nonzero(keep)[0]
    return MatchRecord(
        threshold=record.threshold,
        class_id=record.class_id,
        n_gt=n_gt,
        scores=record.scores[idx],
        is_tp=record.is_tp[idx],
        matched_gt=[record.matched_gt[i] for i in idx],
        det_keys=[record.det_keys[i] for i in idx],
        errors={k: v[idx] for k, v in record.errors.items()},
    )


# ------------------------------------------------------------------------ AP


def pr_curve(record: MatchRecord) -> tuple:
    """(recall, precision) at each record, before interpolation."""
    tp = np.cumsum(record.is_tp).astype(np.float64)
    fp = np.cumsum(~record.is_tp).astype(np.float64)
    prec = tp / np.maximum(tp + fp, 1.0)
    rec = tp / max(record.n_gt, 1)
    return rec, prec


def interpolated_precision(record: MatchRecord) -> np.ndarray:
    """Precision sampled at 101 recall points in [0, 1]; 0 beyond the reached recall."""
    if len(record) == 0 or record.n_gt == 0:
        return np.zeros(101)
    rec, prec = pr_curve(record)
    return np.interp(np.linspace(0.0, 1.0, 101), rec, prec, right=0.0)


def average_precision(record: MatchRecord, n_gt: Optional[int] = None) -> Optional[float]:
    """Normalised area under precision over recall ∈ [0.1, 1], floor 0.1 removed.

    Returns None when there is nothing to score (no gts and no detections).
    """
    if n_gt is not None and n_gt != record.n_gt:
        record = subset_record(record, np.ones(len(record), dtype=bool), n_gt)
    if record.n_gt == 0:
        return None if len(record) == 0 else 0.0
    prec = interpolated_precision(record)
    prec = prec[int(round(100 * MIN_RECALL)) + 1 :] - MIN_PRECISION
    prec = np.maximum(prec, 0.0)
    return float(min(1.0, np.mean(prec) / (1.0 - MIN_PRECISION)))  # clip summation round-off


def tp_errors(record: MatchRecord) -> Dict[str, float]:
    """Mean TP errors; 1.0 (the clipping value) when a class has gts but no TP."""
    if not record.is_tp.any():
        return {k: 1.0 for k in TP_METRICS}
    return {k: float(np.mean(v[record.is_tp])) for k, v in record.errors.items()}


def compose_nds(m_ap: float, m_ate: float, m_ase: float, m_aoe: float, m_ave: float) -> float:
    errs = (m_ate, m_ase, m_aoe, m_ave)
    if min(errs) < 0:
        raise ValueError("error metrics must be non-negative")
    return (5.0 * m_ap + sum(1.0 - min(1.0, e) for e in errs)) / (5.0 + len(errs))


def _mean_defined(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


# ------------------------------------------------------------------- report


@dataclass
class MetricsReport:
    class_names: List[str]
    ap: Dict[str, Dict[float, Optional[float]]]  # class → threshold → AP
    mean_ap: float
    tp: Dict[str, Dict[str, float]]  # class → metric → value (only scored classes)
    m_tp: Dict[str, float]
    nds: float
    breakdowns: Dict[str, Dict[str, dict]] = field(default_factory=dict)  # mode → bin → {n_gt, mAP}
    num_dets: int = 0
    num_gts: int = 0
    pr_curves: Dict[str, np.ndarray] = field(default_factory=dict, compare=False)  # 101-point precision at 2 m

    @property
    def mATE(self) -> float:
        return self.m_tp["trans_err"]

    def ap_at(self, threshold: float) -> float:
        return _mean_defined(self.ap[c][threshold] for c in self.class_names) or 0.0


def evaluate(dump: DetectionDump, gts: Mapping[str, Sequence[Box3D]], class_names: Sequence[str], thresholds: Sequence[float] = THRESHOLDS, breakdowns: bool = True) -> MetricsReport:
    """Full report: per-class AP per threshold, mAP, mean TP errors, NDS and breakdowns."""
    class_names = list(class_names)
    ap: Dict[str, Dict[float, Optional[float]]] = {}
    tp: Dict[str, Dict[str, float]] = {}
    curves = {}
    for cid, name in enumerate(class_names):
        ap[name] = {}
        for thr in thresholds:
            rec = match_detections(dump, gts, thr, cid)
            ap[name][float(thr)] = average_precision(rec)
            if thr == TP_THRESHOLD:
                curves[name] = interpolated_precision(rec)
                if rec.n_gt > 0:
                    tp[name] = tp_errors(rec)
    class_ap = [_mean_defined(ap[c].values()) for c in class_names]
    mean_ap = _mean_defined(class_ap) or 0.0
    if tp:
        m_tp = {k: float(np.mean([tp[c][k] for c in class_names if c in tp])) for k in TP_METRICS}
    else:
        m_tp = {k: 1.0 for k in TP_METRICS}
    report = MetricsReport(
        class_names=class_names,
        ap=ap,
        mean_ap=mean_ap,
        tp=tp,
        m_tp=m_tp,
        nds=compose_nds(mean_ap, *(m_tp[k] for k in TP_METRICS)),
        num_dets=len(dump),
        num_gts=sum(len(v) for v in gts.values()),
        pr_curves=curves,
    )
    if breakdowns:
        for mode in ("distance", "size", "category"):
            report.breakdowns[mode] = breakdown(dump, gts, mode, class_names, thresholds)
    return report


# --------------------------------------------------------------- breakdowns


def _bin_label(lo: float, hi: float) -> str:
    return f"[{lo:g},{'inf' if math.isinf(hi) else f'{hi:g}'})"


def _bin_of(value: float, bins) -> int:
    for i, (lo, hi) in enumerate(bins):
        if lo <= value < hi:
            return i
    return len(bins) - 1


def _ego_distance(b: Box3D) -> float:
    return math.hypot(b.center[0], b.center[1])


def breakdown(dump: DetectionDump, gts: Mapping[str, Sequence[Box3D]], mode: str, class_names: Sequence[str], thresholds: Sequence[float] = THRESHOLDS) -> Dict[str, dict]:
    """mAP per distance bin, per size bin, or AP per category.

    Matching runs once on the full set. A TP belongs to its gt's bin; an FP to
    the bin of its own centre range or longest edge.
    """
    if mode == "category":
        out = {}
        for cid, name in enumerate(class_names):
            aps = [average_precision(match_detections(dump, gts, t, cid)) for t in thresholds]
            n_gt = sum(1 for boxes in gts.values() for b in boxes if b.class_id == cid)
            out[name] = {"n_gt": n_gt, "mAP": _mean_defined(aps)}
        return out
    if mode == "distance":
        bins, key = DISTANCE_BINS, _ego_distance
    elif mode == "size":
        bins, key = SIZE_BINS, lambda b: b.longest_edge
    else:
        raise ValueError(f"unknown breakdown mode {mode!r}")
    gt_bin = {(sid, i): _bin_of(key(b), bins) for sid, boxes in gts.items() for i, b in enumerate(boxes)}
    det_box = {(sid, k): d.box for sid, dets in dump.scenes.items() for k, d in enumerate(dets)}
    per_bin: List[List[Optional[float]]] = [[] for _ in bins]
    for cid in range(len(class_names)):
        for thr in thresholds:
            rec = match_detections(dump, gts, thr, cid)
            det_bins = np.array(
                [gt_bin[m] if m is not None else _bin_of(key(det_box[dk]), bins) for m, dk in zip(rec.matched_gt, rec.det_keys)],
                dtype=np.int64,
            )
            for bi in range(len(bins)):
                n_gt = sum(1 for (sid, i), b in gt_bin.items() if b == bi and gts[sid][i].class_id == cid)
                sub = subset_record(rec, det_bins == bi, n_gt)
                per_bin[bi].append((cid, average_precision(sub)))
    out = {}
    for bi, (lo, hi) in enumerate(bins):
        class_means = []
        for cid in range(len(class_names)):
            class_means.append(_mean_defined(a for c, a in per_bin[bi] if c == cid))
        n_gt = sum(1 for b in gt_bin.values() if b == bi)
        out[_bin_label(lo, hi)] = {"n_gt": n_gt, "mAP": _mean_defined(class_means)}
    return out
