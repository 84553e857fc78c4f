"""Pure numpy implementations of the hot kernels (fallback when the extension is absent)."""

import numpy as np


def cross_combine(x0, z, b, xl):
    """x0 * (z + b) + xl, with b broadcast over rows."""
    return x0 * (z + b) + xl


def cross_combine_backward(g, x0, z, b):
    """Return (grad wrt pre-bias z, grad wrt x0)."""
    return g * x0, g * (z + b)


def layernorm_forward(x, gamma, beta, eps):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0]


def layernorm_backward(g, xhat, rstd, gamma):
    d = xhat.shape[1]
    ggamma = (g * xhat).sum(axis=0)
    gbeta = g.sum(axis=0)
    gh = g * gamma
    gx = (rstd[:, None] / d) * (
        d * gh - gh.sum(axis=1, keepdims=True) - xhat * (gh * xhat).sum(axis=1, keepdims=True)
    )
    return gx, ggamma, gbeta


def softmax_rows(s):
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    return e / e.sum(axis=-1, keepdims=True)


def session_topk_hits(scores, labels, offsets, k):
    """Positives among the top-k rows of each session (stable order on ties)."""
    n_sessions = len(offsets) - 1
    hits = np.zeros(n_sessions, dtype=np.int64)
    for s in range(n_sessions):
        lo, hi = offsets[s], offsets[s + 1]
        order = np.argsort(-scores[lo:hi], kind="stable")
        hits[s] = int(labels[lo:hi][order[:k]].sum())
    return hits


def auc_rank_sum(scores, labels):
    """Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(tie)."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    y = labels[order].astype(bool)
    n = len(s)
    ranks = np.empty(n, dtype=np.float64)
    # 1-based midranks over tie groups
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    mid = (starts + ends + 1) / 2.0
    ranks[:] = np.repeat(mid, ends - starts)
    n_pos = int(y.sum())
    n_neg = n - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
