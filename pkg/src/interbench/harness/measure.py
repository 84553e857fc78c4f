"""Latency and peak-memory measurement."""

from __future__ import annotations

import hashlib
import platform
import threading
import time

import numpy as np

from .. import kernels
from ..errors import ConfigError
from ..model import Batch, ModelConfig, Optimizer, RankingModel, instrumented_step
from ..tensor import AllocStats, RngState, alloc_scope

# timing phases of concurrent experiments never overlap
TIMING_LOCK = threading.Lock()

MIN_WARMUP = 10
MIN_REPS = 100


def host_fingerprint() -> str:
    parts = [
        platform.node(),
        platform.machine(),
        platform.processor(),
        platform.python_version(),
        np.__version__,
        kernels.BACKEND,
    ]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def measure_latency(model: RankingModel, batches: list[Batch], warmup: int = MIN_WARMUP, reps: int = MIN_REPS):
    """Median and p99 wall-clock microseconds of one inference forward per batch.

    Batches are cycled. Caching is disabled for the duration.
    """
    if warmup < MIN_WARMUP or reps < MIN_REPS:
        raise ConfigError(f"latency needs warmup >= {MIN_WARMUP} and reps >= {MIN_REPS}")
    if not batches:
        raise ConfigError("latency needs at least one batch")
    was = model.training
    model.train(False)
    times = np.empty(reps)
    try:
        with TIMING_LOCK:
            for i in range(warmup):
                model.forward(batches[i % len(batches)])
            clock = time.perf_counter_ns
            for i in range(reps):
                b = batches[i % len(batches)]
                t0 = clock()
                model.forward(b)
                times[i] = clock() - t0
    finally:
        model.train(was)
    times /= 1e3
    return float(np.median(times)), float(np.percentile(times, 99))


def peak_stats(model_config: ModelConfig, batch: Batch, budget_bytes: int | None = None, seed: int = 0,
               dense_rows: np.ndarray | None = None) -> AllocStats:
    """Allocation stats of one instrumented train step on a freshly built model."""
    model = RankingModel(model_config, RngState(seed).split("init"))
    if dense_rows is not None:
        model.fit_normalizer(dense_rows)
    opt = Optimizer(model, model_config.optimizer)
    with alloc_scope(budget_bytes) as scope:
        instrumented_step(model, opt, batch)
        stats = scope.snapshot()
    model.release_all()
    return stats


def measure_memory(model_config: ModelConfig, batch: Batch, budget_bytes: int | None, seed: int = 0) -> float:
    """Peak bytes of one train step as a percentage of ``budget_bytes``."""
    if not budget_bytes:
        raise ConfigError("a memory budget is required (--budget-bytes or IB_BUDGET_BYTES)")
    return peak_stats(model_config, batch, budget_bytes, seed).peak_pct
