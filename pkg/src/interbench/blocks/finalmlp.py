"""Two-stream MLP with multi-head bilinear fusion.

Both streams read the same feature embedding (no per-stream feature gating).
Each of the ``d_out`` fusion outputs is an independent head-summed bilinear logit.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..tensor import DEFAULT_DTYPE
from .base import MLP, Block
from .config import BlockConfig


def finalmlp_fusion(o1, o2, b, w1, w2, w3, k):
    """Fused logits, shape ``(n, n_out)``.

    ``b`` is ``(n_out, k)``, ``w1``/``w2`` are ``(n_out, dim)`` and ``w3`` is
    ``(n_out * k * c, c)`` with ``c = dim // k``. Per output ``o`` and head ``j``::

        s_j = b[o, j] + w1_j . o1_j + w2_j . o2_j + o1_j^T W3_j o2_j

    and the logit is the sum over heads.
    """
    n, dim = o1.shape
    if o2.shape != o1.shape:
        raise ConfigError(f"fusion streams differ in shape: {o1.shape} vs {o2.shape}")
    if dim % k:
        raise ConfigError(f"stream width {dim} is not divisible by k={k}")
    c = dim // k
    n_out = b.shape[0]
    a = o1.reshape(n, k, c)
    z = o2.reshape(n, k, c)
    W3 = w3.reshape(n_out, k, c, c)
    lin = o1 @ w1.T + o2 @ w2.T
    # bilinear per head: sum_j a_j^T W3[o, j] z_j
    t = np.einsum("njc,ojcd->nojd", a, W3, optimize=True)
    bil = np.einsum("nojd,njd->no", t, z, optimize=True)
    return b.sum(axis=1) + lin + bil


class FinalMLP(Block):
    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        stream = BlockConfig("mlp", d_in=config.d_in, d_out=config.hidden_sizes[-1], hidden_sizes=config.hidden_sizes[:-1])
        self.stream1 = self.add_child("stream1", MLP(stream, rng.split("stream1"), dtype))
        self.stream2 = self.add_child("stream2", MLP(stream, rng.split("stream2"), dtype))
        dim = config.hidden_sizes[-1]
        k = config.n_heads
        c = dim // k
        self.k, self.c = k, c
        n_out = config.d_out
        self.add_param("fb", n_out, k, scheme="zeros")
        self.add_param("fw1", dim, n_out)
        self.add_param("fw2", dim, n_out)
        self.add_param("fw3", n_out * k * c, c, fan_in=c, fan_out=c)

    def _w(self, name):
        # stored (dim, n_out) for xavier fans; the fusion math wants (n_out, dim)
        return self.params[name].T

    def forward(self, x, ctx=None):
        o1 = self.stream1.forward(x)
        o2 = self.stream2.forward(x)
        self.save(o1=o1, o2=o2)
        p = self.params
        return finalmlp_fusion(o1, o2, p["fb"], self._w("fw1"), self._w("fw2"), p["fw3"], self.k)

    def backward(self, grad_out):
        o1, o2 = self.saved("o1", "o2")
        n = o1.shape[0]
        k, c = self.k, self.c
        n_out = grad_out.shape[1]
        p = self.params
        W3 = p["fw3"].reshape(n_out, k, c, c)
        a = o1.reshape(n, k, c)
        z = o2.reshape(n, k, c)
        self.grads["fb"] += np.broadcast_to(grad_out.sum(axis=0)[:, None], (n_out, k))
        self.grads["fw1"] += o1.T @ grad_out
        self.grads["fw2"] += o2.T @ grad_out
        gW3 = np.einsum("no,njc,njd->ojcd", grad_out, a, z, optimize=True)
        self.grads["fw3"] += gW3.reshape(self.grads["fw3"].shape)
        ga = np.einsum("no,ojcd,njd->njc", grad_out, W3, z, optimize=True).reshape(n, -1)
        gz = np.einsum("no,ojcd,njc->njd", grad_out, W3, a, optimize=True).reshape(n, -1)
        go1 = grad_out @ p["fw1"].T + ga
        go2 = grad_out @ p["fw2"].T + gz
        gx1, _ = self.stream1.backward(go1)
        gx2, _ = self.stream2.backward(go2)
        self.release()
        return gx1 + gx2, None
