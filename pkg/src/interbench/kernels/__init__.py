"""Hot kernels with a compiled core and a numpy fallback.

The Cython extension ``_ckernels`` is used when it imports and the inputs are
C-contiguous float64; everything else routes to ``_pykernels``. Set
``INTERBENCH_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("INTERBENCH_PURE_PYTHON"):
        raise ImportError("forced pure-python kernels")
    from . import _ckernels
except ImportError:
    _ckernels = None

COMPILED = _ckernels is not None
BACKEND = "cython" if COMPILED else "numpy"

__all__ = [
    "BACKEND",
    "COMPILED",
    "auc_rank_sum",
    "cross_combine",
    "cross_combine_backward",
    "layernorm_backward",
    "layernorm_forward",
    "session_topk_hits",
    "softmax_rows",
]


def _f64(*arrays) -> bool:
    return all(a.dtype == np.float64 and a.flags.c_contiguous for a in arrays)


def cross_combine(x0, z, b, xl):
    if COMPILED and _f64(x0, z, b, xl):
        return _ckernels.cross_combine(x0, z, b, xl)
    return _pykernels.cross_combine(x0, z, b, xl)


def cross_combine_backward(g, x0, z, b):
    if COMPILED and _f64(g, x0, z, b):
        return _ckernels.cross_combine_backward(g, x0, z, b)
    return _pykernels.cross_combine_backward(g, x0, z, b)


def layernorm_forward(x, gamma, beta, eps=1e-5):
    if COMPILED and _f64(x, gamma, beta):
        return _ckernels.layernorm_forward(x, gamma, beta, eps)
    return _pykernels.layernorm_forward(x, gamma, beta, eps)


def layernorm_backward(g, xhat, rstd, gamma):
    if COMPILED and _f64(g, xhat, rstd, gamma):
        return _ckernels.layernorm_backward(g, xhat, rstd, gamma)
    return _pykernels.layernorm_backward(g, xhat, rstd, gamma)


def softmax_rows(s):
    if COMPILED and s.ndim == 2 and _f64(s):
        return _ckernels.softmax_rows(s)
    return _pykernels.softmax_rows(s)


def session_topk_hits(scores, labels, offsets, k):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if COMPILED:
        return _ckernels.session_topk_hits(scores, labels, offsets, int(k))
    return _pykernels.session_topk_hits(scores, labels, offsets, int(k))


def auc_rank_sum(scores, labels):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if COMPILED:
        return float(_ckernels.auc_rank_sum(scores, labels))
    return float(_pykernels.auc_rank_sum(scores, labels))
