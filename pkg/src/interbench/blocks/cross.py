"""Cross-layer family: full-rank, low-rank (optionally nonlinear) and gated."""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..tensor import DEFAULT_DTYPE
from .base import Block, affine_backward, relu


def _split_ctx_grad(gxl, gx0, ctx_given):
    if ctx_given:
        return gxl, gx0
    return gxl + gx0, None


class CrossFull(Block):
    """``y = x0 * (xl @ W + b) + xl``."""

    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        d = config.d_in
        self.add_param("W", d, d)
        self.add_param("b", d)

    def forward(self, x, ctx=None):
        x0 = x if ctx is None else ctx
        z = x @ self.params["W"]
        y = kernels.cross_combine(x0, z, self.params["b"], x)
        self.save(x0=x0, xl=x, z=z)
        self._ctx_given = ctx is not None
        return y

    def backward(self, grad_out):
        x0, xl, z = self.saved("x0", "xl", "z")
        gz, gx0 = kernels.cross_combine_backward(grad_out, x0, z, self.params["b"])
        self.grads["b"] += gz.sum(axis=0)
        gxl = grad_out + affine_backward(self, gz, xl, "W", None)
        self.release()
        return _split_ctx_grad(gxl, gx0, self._ctx_given)


class CrossLowRank(Block):
    """``y = x0 * (g(xl @ V) @ U.T + b) + xl`` with ``g`` identity or ReLU."""

    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        d, r = config.d_in, config.rank
        self.add_param("U", d, r)
        self.add_param("V", d, r)
        self.add_param("b", d)
        self.act = config.activation == "relu"

    def forward(self, x, ctx=None):
        x0 = x if ctx is None else ctx
        h = x @ self.params["V"]
        a = relu(h) if self.act else h
        z = a @ self.params["U"].T
        y = kernels.cross_combine(x0, z, self.params["b"], x)
        self.save(x0=x0, xl=x, a=a, z=z)
        self._ctx_given = ctx is not None
        return y

    def backward(self, grad_out):
        x0, xl, a, z = self.saved("x0", "xl", "a", "z")
        U, V = self.params["U"], self.params["V"]
        gz, gx0 = kernels.cross_combine_backward(grad_out, x0, z, self.params["b"])
        self.grads["b"] += gz.sum(axis=0)
        self.grads["U"] += gz.T @ a
        gh = gz @ U
        if self.act:
            gh = gh * (a > 0)
        self.grads["V"] += xl.T @ gh
        gxl = grad_out + gh @ V.T
        self.release()
        return _split_ctx_grad(gxl, gx0, self._ctx_given)


class GatedCross(Block):
    """``y = x0 * (xl @ Wc + b) * sigmoid(xl @ Wg) + xl``."""

    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        d = config.d_in
        self.add_param("Wc", d, d)
        self.add_param("b", d)
        self.add_param("Wg", d, d)

    def forward(self, x, ctx=None):
        x0 = x if ctx is None else ctx
        c = x @ self.params["Wc"] + self.params["b"]
        s = 1.0 / (1.0 + np.exp(-(x @ self.params["Wg"])))
        y = x0 * c * s + x
        self.save(x0=x0, xl=x, c=c, s=s)
        self._ctx_given = ctx is not None
        return y

    def backward(self, grad_out):
        x0, xl, c, s = self.saved("x0", "xl", "c", "s")
        gx0c = grad_out * x0
        gc = gx0c * s
        gpre = gx0c * c * s * (1.0 - s)
        gxl = grad_out + affine_backward(self, gc, xl, "Wc", "b") + affine_backward(self, gpre, xl, "Wg", None)
        gx0 = grad_out * c * s
        self.release()
        return _split_ctx_grad(gxl, gx0, self._ctx_given)
