"""Ranking metrics over session-grouped eval rows."""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ConfigError, UsageError

HIT_MODES = ("per-session", "global-ratio", "capped")


def _offsets(offsets, n):
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.ndim != 1 or offsets.size < 1 or offsets[0] != 0 or offsets[-1] != n or np.any(np.diff(offsets) < 0):
        raise UsageError("session offsets must start at 0, end at the row count and be nondecreasing")
    return offsets


def hit_at_k(scores, labels, offsets, k: int = 3, mode: str = "per-session") -> float:
    """Saves among the top-``k`` scored rows of each session.

    Sessions are the row ranges ``offsets[i]:offsets[i+1]``. Ties keep the original
    row order. Modes:

    * ``per-session``: mean hit count over sessions with at least one save.
    * ``global-ratio``: total hits divided by total saves in those sessions.
    * ``capped``: mean of ``hits / min(k, saves)`` over those sessions.
    """
    if mode not in HIT_MODES:
        raise ConfigError(f"hit mode must be one of {HIT_MODES}, got {mode!r}")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.size == 0:
        raise UsageError("hit_at_k on an empty eval set")
    offsets = _offsets(offsets, scores.size)
    sizes = np.diff(offsets)
    if np.any(sizes < k):
        raise UsageError(f"every session needs at least k={k} rows")
    hits = kernels.session_topk_hits(scores, labels, offsets, k)
    saves = np.add.reduceat(labels, offsets[:-1]) if sizes.size else np.zeros(0, dtype=np.int64)
    keep = saves > 0
    if not keep.any():
        return 0.0
    if mode == "per-session":
        return float(hits[keep].mean())
    if mode == "global-ratio":
        return float(hits[keep].sum() / saves[keep].sum())
    return float((hits[keep] / np.minimum(k, saves[keep])).mean())


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    n_pos = int(np.count_nonzero(labels))
    if n_pos == 0 or n_pos == labels.size:
        raise UsageError("auc needs both positive and negative labels")
    return kernels.auc_rank_sum(scores, (labels != 0).astype(np.int64))
