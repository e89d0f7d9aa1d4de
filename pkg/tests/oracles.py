"""Independent reference implementations used only by the tests.

Each one is written the slow, obvious way (loops, enumeration, exact
fractions) and shares no code with the package under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# ------------------------------------------------------------ finite differences


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f(x) / dx for scalar-valued ``f`` on a float64 array, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f(x.copy())
        x[i] = orig - h
        fm = f(x.copy())
        x[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# -------------------------------------------------------------------- matching


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Minimum over every injection gt → prediction (N_pred! / (N_pred − N_gt)! of them)."""
    n_pred, n_gt = cost.shape
    best = math.inf
    for perm in itertools.permutations(range(n_pred), n_gt):
        total = 0.0
        for gt, pred in enumerate(perm):
            total += float(cost[pred, gt])
        best = min(best, total)
    return best


# ------------------------------------------------------------- greedy matching


def exhaustive_greedy_labels(dets, gts, threshold):
    """TP/FP flags for (score, x, y) detections against (x, y) gts of one class.

    Written as the literal rule: walk detections from highest score; each
    takes the nearest still-free gt whose distance is at most the threshold.
    Ties on distance go to the lower gt index, ties on score keep input order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][0], i))
    free = [True] * len(gts)
    labels = [False] * len(dets)
    for i in order:
        _, x, y = dets[i]
        cands = []
        for j, (gx, gy) in enumerate(gts):
            d = math.sqrt((x - gx) ** 2 + (y - gy) ** 2)
            if free[j] and d <= threshold:
                cands.append((d, j))
        if cands:
            _, j = min(cands)
            free[j] = False
            labels[i] = True
    return [labels[i] for i in order]


# ------------------------------------------------------------------------- AP


def manual_ap(tp_flags, n_gt: int) -> float:
    """nuScenes-style AP by hand: 101 recall samples, linear interpolation, floor 0.1.

    Between recorded recall values precision is interpolated linearly; at a
    repeated recall the last record wins; past the highest recall precision is
    zero; below the first recall it equals the first precision.
    """
    if n_gt == 0:
        raise ValueError("undefined")
    tp = fp = 0
    rec, prec = [], []
    for flag in tp_flags:
        if flag:
            tp += 1
        else:
            fp += 1
        rec.append(tp / n_gt)
        prec.append(tp / (tp + fp))
    if not rec:
        return 0.0
    total = 0.0
    count = 0
    for k in range(11, 101):
        r = k / 100.0
        last = None
        for j in range(len(rec)):
            if rec[j] <= r:
                last = j
        if last is None:
            p = prec[0]
        elif last == len(rec) - 1:
            p = prec[last] if r == rec[last] else 0.0
        else:
            r0, r1 = rec[last], rec[last + 1]
            p0, p1 = prec[last], prec[last + 1]
            p = p0 if r1 == r0 else p0 + (p1 - p0) * (r - r0) / (r1 - r0)
        total += max(p - 0.1, 0.0)
        count += 1
    return total / count / 0.9


# Golden values worked out by hand (see the derivations next to each case).
# Records are listed in descending score order.
GOLDEN_AP = [
    # TP, FP, TP over 2 gts: recall 0.5→0.5→1, precision 1→1/2→2/3.
    # r ∈ [0.11, 0.49]: 39 × 0.9; r = 0.5: 0.4; r = 0.5 + k/100: 0.4 + k/300 (k = 1..50).
    # Sum 35.1 + 0.4 + 24.25 = 59.75, AP = 59.75 / 90 / 0.9 = 239/324.
    ("tp_fp_tp", [True, False, True], 2, Fraction(239, 324)),
    # Perfect ranking: precision 1 everywhere.
    ("all_tp", [True, True], 2, Fraction(1)),
    # FP then TP over 1 gt: precision r/2 on the line (0,0)–(1,1/2).
    # Σ_{k=20}^{100} (k − 20)/200 = 16.2, AP = 16.2 / 81 = 1/5.
    ("fp_tp", [False, True], 1, Fraction(1, 5)),
    # Nothing detected.
    ("none", [], 3, Fraction(0)),
    # TP, FP, FP, TP over 4 gts; recall stops at 0.5.
    # r < 0.25: 14 × 0.9; r = 0.25: 7/30; r = 0.25 + k/100: 7/30 + k/150 (k = 1..24) → 7.6;
    # r = 0.5: 0.4; beyond: 0. Sum 125/6, AP = (125/6) / 81 = 125/486.
    ("tp_fp_fp_tp", [True, False, False, True], 4, Fraction(125, 486)),
]
