"""metrics.txt writer/parser and the PR / training-curve plots."""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .metrics import TP_METRICS, MetricsReport

METRICS_FILE = "metrics.txt"
_AP_KEY = re.compile(r"^(.*?)\.(\d+(?:\.\d+)?)$")  # <class>.<threshold>


class ReportError(OSError):
    pass


def _num(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _parse_num(text: str):
    text = text.strip()
    if text == "none":
        return None
    if text.lstrip("-").isdigit():
        return int(text)
    return float(text)


def format_metrics(report: MetricsReport) -> str:
    """Key = value lines in a fixed order; floats use the shortest exact repr."""
    lines = [
        "classes = " + ",".join(report.class_names),
        f"num_dets = {report.num_dets}",
        f"num_gts = {report.num_gts}",
        f"mAP = {_num(report.mean_ap)}",
        f"NDS = {_num(report.nds)}",
    ]
    for k in TP_METRICS:
        lines.append(f"m{k} = {_num(report.m_tp[k])}")
    for name in report.class_names:
        for thr, v in report.ap[name].items():
            lines.append(f"ap.{name}.{thr:g} = {_num(v)}")
    for name in report.class_names:
        if name in report.tp:
            for k in TP_METRICS:
                lines.append(f"tp.{name}.{k} = {_num(report.tp[name][k])}")
    for mode, table in report.breakdowns.items():
        for label, row in table.items():
            lines.append(f"breakdown.{mode}.{label}.n_gt = {_num(row['n_gt'])}")
            lines.append(f"breakdown.{mode}.{label}.mAP = {_num(row['mAP'])}")
    for name, curve in report.pr_curves.items():
        lines.append(f"pr.{name} = " + " ".join(f"{p:.6f}" for p in curve))
    return "\n".join(lines) + "\n"


def parse_metrics(text: str) -> MetricsReport:
    kv: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if " = " not in line:
            raise ValueError(f"metrics line {lineno}: expected 'key = value'")
        k, v = line.split(" = ", 1)
        kv[k.strip()] = v
    classes = [c for c in kv.pop("classes").split(",") if c]
    report = MetricsReport(
        class_names=classes,
        ap={c: {} for c in classes},
        mean_ap=float(kv.pop("mAP")),
        tp={},
        m_tp={k: float(kv.pop(f"m{k}")) for k in TP_METRICS},
        nds=float(kv.pop("NDS")),
        num_dets=int(kv.pop("num_dets")),
        num_gts=int(kv.pop("num_gts")),
    )
    for key, value in kv.items():
        head, _, rest = key.partition(".")
        if head == "ap":
            m = _AP_KEY.match(rest)
            if m is None:
                raise ValueError(f"bad AP key {key!r}")
            report.ap[m.group(1)][float(m.group(2))] = _parse_num(value)
        elif head == "tp":
            name, metric = rest.rsplit(".", 1)
            report.tp.setdefault(name, {})[metric] = float(value)
        elif head == "breakdown":
            mode, remainder = rest.split(".", 1)
            label, field_name = remainder.rsplit(".", 1)
            report.breakdowns.setdefault(mode, {}).setdefault(label, {})[field_name] = _parse_num(value)
        elif head == "pr":
            report.pr_curves[rest] = np.array([float(x) for x in value.split()])
        else:
            raise ValueError(f"unknown metrics key {key!r}")
    return report


def read_metrics(path) -> MetricsReport:
    return parse_metrics(Path(path).read_text())


def emit_report(report: MetricsReport, out_dir, loss_curve: Optional[tuple] = None) -> Dict[str, Path]:
    """Write metrics.txt, pr_curves.png and (when a loss curve is given) training_curve.png."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"metrics": out / METRICS_FILE}
        paths["metrics"].write_text(format_metrics(report))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    paths["pr"] = out / "pr_curves.png"
    plot_pr_curves(report, paths["pr"])
    if loss_curve is not None:
        paths["curve"] = out / "training_curve.png"
        plot_training_curve(*loss_curve, paths["curve"])
    return paths


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_pr_curves(report: MetricsReport, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    recall = np.linspace(0.0, 1.0, 101)
    for name in report.class_names:
        curve = report.pr_curves.get(name)
        if curve is None:
            continue
        ap = report.ap[name].get(2.0)
        label = f"{name} (AP@2m {ap:.3f})" if ap is not None else f"{name} (no gt)"
        ax.plot(recall, curve, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.set_title(f"PR @ 2 m, mAP {report.mean_ap:.3f}, NDS {report.nds:.3f}")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata={"Software": None})
    plt.close(fig)


def plot_training_curve(steps: Sequence[int], losses: Sequence[float], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(steps, losses, lw=1)
    losses = np.asarray(losses, dtype=float)
    if len(losses) and np.all(losses > 0) and not math.isclose(losses.max(), losses.min()):
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("total loss")
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata={"Software": None})
    plt.close(fig)
