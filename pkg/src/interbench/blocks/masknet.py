"""Instance-guided mask blocks and their serial/parallel arrangements.

MaskBlock order: the mask comes from the feature embedding through a two-layer
bottleneck of width ``round(projection_ratio * d_ctx)``, multiplies the block
input elementwise, then affine -> layernorm -> ReLU.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..tensor import DEFAULT_DTYPE
from .base import Block, affine_backward, relu
from .config import BlockConfig

LN_EPS = 1e-5


def aggregation_width(projection_ratio: float, d_ctx: int) -> int:
    return max(1, int(round(projection_ratio * d_ctx)))


class MaskBlock(Block):
    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        d_in, d_out = config.d_in, config.d_out
        d_ctx = config.d_ctx or d_in
        agg = aggregation_width(config.projection_ratio, d_ctx)
        self.agg_width = agg
        self.add_param("W1", d_ctx, agg)
        self.add_param("b1", agg)
        self.add_param("W2", agg, d_in)
        self.add_param("b2", d_in)
        self.add_param("W3", d_in, d_out)
        self.add_param("b3", d_out)
        self.add_param("gamma", d_out, scheme="ones")
        self.add_param("beta", d_out)

    def forward(self, x, ctx=None):
        p = self.params
        v_emb = x if ctx is None else ctx
        a1 = relu(v_emb @ p["W1"] + p["b1"])
        mask = a1 @ p["W2"] + p["b2"]
        m = mask * x
        pre = m @ p["W3"] + p["b3"]
        if pre.dtype == np.float64:
            pre = np.ascontiguousarray(pre)
        ln, xhat, rstd = kernels.layernorm_forward(pre, p["gamma"], p["beta"], LN_EPS)
        y = relu(ln)
        self.save(v_emb=v_emb, v_in=x, a1=a1, mask=mask, m=m, xhat=xhat, rstd=rstd, y=y)
        self._ctx_given = ctx is not None
        return y

    def backward(self, grad_out):
        v_emb, v_in, a1, mask, m, xhat, rstd, y = self.saved("v_emb", "v_in", "a1", "mask", "m", "xhat", "rstd", "y")
        gln = np.ascontiguousarray(grad_out * (y > 0))
        gpre, ggamma, gbeta = kernels.layernorm_backward(gln, xhat, rstd, self.params["gamma"])
        self.grads["gamma"] += ggamma
        self.grads["beta"] += gbeta
        gm = affine_backward(self, gpre, m, "W3", "b3")
        gmask = gm * v_in
        gv_in = gm * mask
        ga1 = affine_backward(self, gmask, a1, "W2", "b2")
        gh1 = ga1 * (a1 > 0)
        gv_emb = affine_backward(self, gh1, v_emb, "W1", "b1")
        self.release()
        if self._ctx_given:
            return gv_in, gv_emb
        return gv_in + gv_emb, None


def maskblock_configs(cfg: BlockConfig) -> list[BlockConfig]:
    d_ctx = cfg.d_ctx or cfg.d_in
    out = []
    for i in range(cfg.n_blocks):
        if cfg.variant == "masknet-serial" and i > 0:
            d_in = cfg.d_out
        else:
            d_in = cfg.d_in
        out.append(
            BlockConfig(
                "maskblock", d_in=d_in, d_out=cfg.d_out, d_ctx=d_ctx, projection_ratio=cfg.projection_ratio
            )
        )
    return out


class MaskNet(Block):
    """Serial: blocks chained, each mask reads the feature embedding.
    Parallel: every block reads the feature embedding; outputs are concatenated."""

    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        self.parallel = config.variant == "masknet-parallel"
        self.blocks = [
            self.add_child(f"block{i}", MaskBlock(c, rng.split(f"block{i}"), dtype))
            for i, c in enumerate(maskblock_configs(config))
        ]

    def forward(self, x, ctx=None):
        v_emb = x if ctx is None else ctx
        self._ctx_given = ctx is not None
        if self.parallel:
            return np.concatenate([b.forward(x, v_emb) for b in self.blocks], axis=1)
        h = x
        for b in self.blocks:
            h = b.forward(h, v_emb)
        return h

    def backward(self, grad_out):
        g_emb = None
        if self.parallel:
            g_in = None
            width = self.config.d_out
            for i, b in enumerate(self.blocks):
                gx, gc = b.backward(np.ascontiguousarray(grad_out[:, i * width:(i + 1) * width]))
                g_in = gx if g_in is None else g_in + gx
                g_emb = gc if g_emb is None else g_emb + gc
        else:
            g_in = grad_out
            for b in reversed(self.blocks):
                g_in, gc = b.backward(g_in)
                g_emb = gc if g_emb is None else g_emb + gc
        if self._ctx_given:
            return g_in, g_emb
        return g_in + g_emb, None
