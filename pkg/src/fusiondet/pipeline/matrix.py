"""Sensor-combination experiment matrix: same data and seeds, one row per (variant, seed)."""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import RunConfig
from .train import evaluate_model, train

log = logging.getLogger(__name__)

VARIANTS = {
    "L": ("lidar",),
    "C": ("camera",),
    "L+C": ("lidar", "camera"),
    "C+R": ("camera", "radar"),
    "L+C+R": ("lidar", "camera", "radar"),
}


@dataclass
class MatrixRow:
    variant: str
    seed: int
    status: str = "ok"
    mean_ap: Optional[float] = None
    nds: Optional[float] = None
    final_loss: Optional[float] = None
    seconds: float = 0.0
    breakdowns: Dict[str, dict] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


@dataclass
class MatrixResult:
    rows: List[MatrixRow]

    def medians(self) -> Dict[str, Optional[float]]:
        out = {}
        for name in dict.fromkeys(r.variant for r in self.rows):
            vals = [r.mean_ap for r in self.rows if r.variant == name and r.status == "ok"]
            out[name] = statistics.median(vals) if vals else None
        return out

    def table(self) -> str:
        head = "variant\tseed\tstatus\tmAP\tNDS\tfinal_loss\tlidar_preset\tseconds"
        lines = [head]
        for r in self.rows:
            fmt = lambda v: "-" if v is None else f"{v:.4f}"
            preset = r.provenance.get("lidar_preset", "-")
            lines.append(f"{r.variant}\t{r.seed}\t{r.status}\t{fmt(r.mean_ap)}\t{fmt(r.nds)}\t{fmt(r.final_loss)}\t{preset}\t{r.seconds:.1f}")
        lines.append("")
        lines.append("median mAP over seeds")
        for name, v in self.medians().items():
            lines.append(f"{name}\t{'-' if v is None else f'{v:.4f}'}")
        for r in self.rows:
            for mode, tab in r.breakdowns.items():
                for label, row in tab.items():
                    m = row["mAP"]
                    lines.append(f"breakdown\t{r.variant}\t{r.seed}\t{mode}\t{label}\tn_gt={row['n_gt']}\tmAP={'-' if m is None else f'{m:.4f}'}")
        return "\n".join(lines) + "\n"


def variant_config(base: RunConfig, variant: str, seed: int) -> RunConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {list(VARIANTS)}")
    return base.replace(
        model={"modalities": VARIANTS[variant], "seed": seed},
        train={"seed": seed},
        name=f"{base.name}-{variant}-s{seed}",
    )


def run_experiment_matrix(
    base: RunConfig,
    train_samples: Sequence,
    val_samples: Sequence,
    variants: Sequence[str] = tuple(VARIANTS),
    seeds: Sequence[int] = (0,),
    class_names: Optional[Sequence[str]] = None,
    out_dir=None,
    provenance: Optional[dict] = None,
    configs: Optional[Sequence[tuple]] = None,
) -> MatrixResult:
    """Train and evaluate every variant × seed on shared data.

    ``configs`` may list explicit ``(label, RunConfig)`` pairs instead of
    named variants. A failing member is recorded and the rest still run.
    """
    provenance = dict(provenance or {})
    jobs = list(configs) if configs is not None else [(v, variant_config(base, v, s)) for v in variants for s in seeds]
    rows = []
    for label, cfg in jobs:
        row = MatrixRow(variant=label, seed=cfg.train.seed, provenance={**provenance, "lidar_preset": cfg.data.lidar_preset})
        run_dir = Path(out_dir) / f"{label}-s{cfg.train.seed}".replace("+", "") if out_dir else None
        try:
            res = train(cfg, train_samples, out_dir=run_dir)
            rep = evaluate_model(res.model, val_samples, cfg, class_names)
            row.mean_ap, row.nds = rep.mean_ap, rep.nds
            row.final_loss = float(res.log.totals()[-1])
            row.breakdowns = rep.breakdowns
            row.seconds = res.seconds
        except Exception as exc:  # a failed member must not sink the matrix
            log.exception("matrix member %s failed", label)
            row.status = f"failed: {type(exc).__name__}: {exc}".replace("\t", " ").replace("\n", " ")
        rows.append(row)
        log.info("matrix %s seed %d: %s mAP=%s", label, row.seed, row.status, row.mean_ap)
    result = MatrixResult(rows)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "matrix.txt").write_text(result.table())
    return result
