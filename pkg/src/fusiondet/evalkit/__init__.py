from .metrics import (
    DISTANCE_BINS,
    SIZE_BINS,
    THRESHOLDS,
    TP_METRICS,
    MatchRecord,
    MetricsReport,
    average_precision,
    breakdown,
    compose_nds,
    evaluate,
    interpolated_precision,
    match_detections,
    pr_curve,
    scale_error,
    tp_errors,
    yaw_error,
)
from .report import METRICS_FILE, ReportError, emit_report, format_metrics, parse_metrics, read_metrics
