"""Constraint measurement: ranking metrics, latency, memory, reproducibility, reports."""

from .experiment import (
    BASELINE_STD_THRESHOLD,
    CSV_COLUMNS,
    ExperimentConfig,
    MetricsReport,
    ReproReport,
    apply_baseline,
    reproducibility,
    run_experiment,
    run_sweep,
    train_and_evaluate,
)
from .measure import host_fingerprint, measure_latency, measure_memory, peak_stats
from .metrics import HIT_MODES, auc, hit_at_k
from .report import join_reports, read_json_reports, to_csv, to_json, to_markdown, write_reports, write_repro

__all__ = [
    "BASELINE_STD_THRESHOLD",
    "CSV_COLUMNS",
    "HIT_MODES",
    "ExperimentConfig",
    "MetricsReport",
    "ReproReport",
    "apply_baseline",
    "auc",
    "hit_at_k",
    "host_fingerprint",
    "join_reports",
    "measure_latency",
    "measure_memory",
    "peak_stats",
    "read_json_reports",
    "reproducibility",
    "run_experiment",
    "run_sweep",
    "to_csv",
    "to_json",
    "to_markdown",
    "train_and_evaluate",
    "write_reports",
    "write_repro",
]
