"""Composition combinators: stack, parallel-concat and DHEN.

Context threading rules:

* A run of consecutive cross-family children in a stack uses the input of the
  run's first layer as ``x0`` (standard stacked-cross behaviour; a stack that
  starts with cross layers crosses against its own input).
* Every other child receives the outer instance context (the feature embedding
  for a top-level interaction block).
* Inside parallel-concat and DHEN layers cross children cross against the
  layer input.
"""

from __future__ import annotations

import numpy as np

from ..tensor import DEFAULT_DTYPE
from .base import Block, affine_backward
from .config import CROSS_VARIANTS, output_dim


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


class Stack(Block):
    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        from .catalog import build

        super().__init__(config, rng, dtype)
        self.blocks = [
            self.add_child(f"{i}", build(c, rng.split(f"child{i}"), dtype)) for i, c in enumerate(config.children)
        ]
        self.is_cross = [c.variant in CROSS_VARIANTS for c in config.children]

    def forward(self, x, ctx=None):
        outer = x if ctx is None else ctx
        self._ctx_given = ctx is not None
        h = x
        run_start = None
        sources = []
        for i, (blk, cross) in enumerate(zip(self.blocks, self.is_cross)):
            if cross:
                if run_start is None:
                    run_start = i
                    x0 = h
                sources.append(run_start)
                h = blk.forward(h, x0)
            else:
                run_start = None
                sources.append(-1)
                h = blk.forward(h, outer)
        self._sources = sources
        return h

    def backward(self, grad_out):
        # x0_grad[i]: gradient reaching child i's input through its use as a cross x0
        x0_grad: list = [None] * len(self.blocks)
        g_outer = None
        g = grad_out
        for i in reversed(range(len(self.blocks))):
            gx, gc = self.blocks[i].backward(g)
            src = self._sources[i]
            if src < 0:
                g_outer = _add(g_outer, gc)
            else:
                x0_grad[src] = _add(x0_grad[src], gc)
            g = _add(gx, x0_grad[i])
        if self._ctx_given:
            return g, g_outer
        return _add(g, g_outer), None


class ParallelConcat(Block):
    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        from .catalog import build

        super().__init__(config, rng, dtype)
        self.blocks = [
            self.add_child(f"{i}", build(c, rng.split(f"child{i}"), dtype)) for i, c in enumerate(config.children)
        ]
        self.widths = [output_dim(c) for c in config.children]
        self.is_cross = [c.variant in CROSS_VARIANTS for c in config.children]

    def forward(self, x, ctx=None):
        outer = x if ctx is None else ctx
        self._ctx_given = ctx is not None
        outs = [blk.forward(x, None if cross else outer) for blk, cross in zip(self.blocks, self.is_cross)]
        return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)

    def backward(self, grad_out):
        gx = gouter = None
        off = 0
        for blk, w in zip(self.blocks, self.widths):
            gi, gc = blk.backward(np.ascontiguousarray(grad_out[:, off:off + w]))
            off += w
            gx = _add(gx, gi)
            gouter = _add(gouter, gc)
        if self._ctx_given:
            return gx, gouter
        return _add(gx, gouter), None


class DHEN(Block):
    """Per layer: run the layer's modules in parallel, concatenate, project to the layer width."""

    uses_ctx = True

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        from .catalog import build

        super().__init__(config, rng, dtype)
        self.layers = []
        for i, layer in enumerate(config.children):
            mods = [
                self.add_child(f"layer{i}.{j}", build(c, rng.split(f"layer{i}.{j}"), dtype))
                for j, c in enumerate(layer)
            ]
            widths = [output_dim(c) for c in layer]
            cross = [c.variant in CROSS_VARIANTS for c in layer]
            self.add_param(f"P{i}", sum(widths), config.layer_widths[i])
            self.add_param(f"p{i}", config.layer_widths[i])
            self.layers.append((mods, widths, cross))

    def forward(self, x, ctx=None):
        outer = x if ctx is None else ctx
        self._ctx_given = ctx is not None
        h = x
        for i, (mods, _, cross) in enumerate(self.layers):
            outs = [m.forward(h, None if c else outer) for m, c in zip(mods, cross)]
            cat = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
            self.save(**{f"cat{i}": cat})
            h = cat @ self.params[f"P{i}"] + self.params[f"p{i}"]
        return h

    def backward(self, grad_out):
        g = grad_out
        gouter = None
        for i in reversed(range(len(self.layers))):
            mods, widths, _ = self.layers[i]
            gcat = affine_backward(self, g, self.saved(f"cat{i}"), f"P{i}", f"p{i}")
            g = None
            off = 0
            for m, w in zip(mods, widths):
                gi, gc = m.backward(np.ascontiguousarray(gcat[:, off:off + w]))
                off += w
                g = _add(g, gi)
                gouter = _add(gouter, gc)
        self.release()
        if self._ctx_given:
            return g, gouter
        return _add(g, gouter), None
