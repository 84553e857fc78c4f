from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import UsageError
from ..tensor import DEFAULT_DTYPE, RngState, current_scope, init_param
from .config import BlockConfig


class Block:
    """Differentiable unit with hand-written backward.

    ``forward(x, ctx)`` maps an ``(n, d_in)`` batch to ``(n, d_out)``. ``ctx`` is the
    instance context: the ``x0`` of a cross layer or the feature embedding a mask
    is computed from. When ``ctx`` is None the block uses ``x`` for both roles and
    ``backward`` folds both gradient paths into the input gradient, returning
    ``(grad_x, None)``; otherwise it returns ``(grad_x, grad_ctx)``.
    """

    uses_ctx = False

    def __init__(self, config: BlockConfig, rng: RngState, dtype=DEFAULT_DTYPE):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: list[tuple[str, Block]] = []
        self.training = True
        self._rng = rng
        self._saved: dict[str, np.ndarray] = {}

    # -- parameters ----------------------------------------------------

    def add_param(
        self,
        name: str,
        rows: int,
        cols: int | None = None,
        scheme: str = "xavier-uniform",
        fan_in: int | None = None,
        fan_out: int | None = None,
    ) -> np.ndarray:
        if cols is None:
            # 1-D vectors (biases, layernorm gains)
            if scheme == "ones":
                p = np.ones(rows, dtype=self.dtype)
            else:
                p = np.zeros(rows, dtype=self.dtype)
        else:
            p = init_param(
                rows, cols, scheme, self._rng.split(name), dtype=self.dtype, fan_in=fan_in, fan_out=fan_out
            )
        self.params[name] = p
        self.grads[name] = np.zeros_like(p)
        return p

    def add_child(self, name: str, block: "Block") -> "Block":
        self.children.append((name, block))
        return block

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for name, p in self.params.items():
            yield prefix + name, p, self.grads[name]
        for cname, child in self.children:
            yield from child.named_parameters(f"{prefix}{cname}.")

    def num_params(self) -> int:
        return sum(p.size for _, p, _ in self.named_parameters())

    def zero_grad(self) -> None:
        for _, _, g in self.named_parameters():
            g.fill(0.0)

    def train(self, mode: bool = True) -> "Block":
        self.training = mode
        for _, child in self.children:
            child.train(mode)
        return self

    # -- activation cache ----------------------------------------------

    def save(self, **arrays: np.ndarray) -> None:
        if not self.training:
            return
        scope = current_scope()
        for name, arr in arrays.items():
            old = self._saved.get(name)
            if scope is not None:
                if old is not None:
                    scope.drop(old)
                scope.hold(arr)
            self._saved[name] = arr

    def saved(self, *names: str):
        try:
            vals = [self._saved[n] for n in names]
        except KeyError:
            raise UsageError(f"{type(self).__name__}.backward() called before a training forward()") from None
        return vals[0] if len(vals) == 1 else vals

    def release(self) -> None:
        scope = current_scope()
        if scope is not None:
            for arr in self._saved.values():
                scope.drop(arr)
        self._saved.clear()

    def release_all(self) -> None:
        self.release()
        for _, child in self.children:
            child.release_all()

    def saved_arrays(self) -> Iterator[np.ndarray]:
        yield from self._saved.values()
        for _, child in self.children:
            yield from child.saved_arrays()

    # -- interface -----------------------------------------------------

    def forward(self, x: np.ndarray, ctx: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    __call__ = forward

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.config.variant}, params={self.num_params()})"


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def affine_backward(block: Block, g: np.ndarray, x: np.ndarray, w: str, b: str | None) -> np.ndarray:
    """Accumulate grads for ``y = x @ W + b`` and return the input gradient."""
    block.grads[w] += x.T @ g
    if b is not None:
        block.grads[b] += g.sum(axis=0)
    return g @ block.params[w].T


class Identity(Block):
    def forward(self, x, ctx=None):
        self.save(_seen=x)
        return x

    def backward(self, grad_out):
        self.saved("_seen")
        self.release()
        return grad_out, None


class MLP(Block):
    """Dense layers ``d_in -> hidden... -> d_out``; ``activation`` applies after every layer."""

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        sizes = [config.d_in, *config.hidden_sizes, config.d_out]
        self.n_layers = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.add_param(f"W{i}", a, b)
            self.add_param(f"b{i}", b)
        self.act = config.activation == "relu"

    def forward(self, x, ctx=None):
        h = x
        for i in range(self.n_layers):
            self.save(**{f"in{i}": h})
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if self.act:
                h = relu(h)
        self.save(out=h)
        return h

    def backward(self, grad_out):
        g = grad_out
        out = self.saved("out")
        for i in reversed(range(self.n_layers)):
            if self.act:
                g = g * (out > 0)
            x = self.saved(f"in{i}")
            g = affine_backward(self, g, x, f"W{i}", f"b{i}")
            out = x
        self.release()
        return g, None
