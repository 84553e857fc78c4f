"""Variant registry: ``build`` and the closed-form ``param_count``."""

from __future__ import annotations

from ..errors import ConfigError
from ..tensor import DEFAULT_DTYPE, RngState, as_rng
from .base import MLP, Block, Identity
from .compose import DHEN, ParallelConcat, Stack
from .config import STUB_VARIANTS, BlockConfig, output_dim, token_count
from .cross import CrossFull, CrossLowRank, GatedCross
from .finalmlp import FinalMLP
from .masknet import MaskBlock, MaskNet, aggregation_width
from .transformer import TransformerEncoder, feature_segments

REGISTRY: dict[str, type[Block]] = {
    "identity": Identity,
    "mlp": MLP,
    "cross-full": CrossFull,
    "cross-lowrank": CrossLowRank,
    "gated-cross": GatedCross,
    "maskblock": MaskBlock,
    "masknet-serial": MaskNet,
    "masknet-parallel": MaskNet,
    "finalmlp-fusion": FinalMLP,
    "transformer-encoder": TransformerEncoder,
    "stack": Stack,
    "parallel-concat": ParallelConcat,
    "dhen": DHEN,
}


def _check_buildable(cfg: BlockConfig) -> None:
    if cfg.variant in STUB_VARIANTS:
        raise ConfigError(f"variant {cfg.variant!r} is a parameter-count stub and cannot be built")
    children = cfg.children
    if cfg.variant == "dhen":
        children = [c for layer in children for c in layer]
    for c in children:
        _check_buildable(c)


def build(config: BlockConfig, rng: RngState | int = 0, dtype=DEFAULT_DTYPE) -> Block:
    """Instantiate ``config`` (already resolved to concrete widths)."""
    config.validate()
    _check_buildable(config)
    return REGISTRY[config.variant](config, as_rng(rng), dtype)


def _linear(a: int, b: int) -> int:
    return a * b + b


def _mlp(sizes: list[int]) -> int:
    return sum(_linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))


def param_count(cfg: BlockConfig) -> int:
    """Closed-form parameter count; independent of any built block."""
    v = cfg.variant
    d = cfg.d_in
    if v == "identity":
        return 0
    if v == "mlp":
        return _mlp([d, *cfg.hidden_sizes, cfg.d_out])
    if v == "cross-full":
        return d * d + d
    if v == "cross-lowrank":
        return 2 * d * cfg.rank + d
    if v == "gated-cross":
        return 2 * d * d + d
    if v == "maskblock":
        d_ctx = cfg.d_ctx or d
        agg = aggregation_width(cfg.projection_ratio, d_ctx)
        return _linear(d_ctx, agg) + _linear(agg, d) + _linear(d, cfg.d_out) + 2 * cfg.d_out
    if v in ("masknet-serial", "masknet-parallel"):
        d_ctx = cfg.d_ctx or d
        agg = aggregation_width(cfg.projection_ratio, d_ctx)
        total = 0
        for i in range(cfg.n_blocks):
            d_blk = cfg.d_out if (v == "masknet-serial" and i > 0) else d
            total += _linear(d_ctx, agg) + _linear(agg, d_blk) + _linear(d_blk, cfg.d_out) + 2 * cfg.d_out
        return total
    if v == "finalmlp-fusion":
        stream = _mlp([d, *cfg.hidden_sizes])
        dim = cfg.hidden_sizes[-1]
        k = cfg.n_heads
        c = dim // k
        return 2 * stream + cfg.d_out * (k + 2 * dim + k * c * c)
    if v == "transformer-encoder":
        D = cfg.token_dim
        F = cfg.ffn_dim or 2 * D
        total = 0
        for kind, w in feature_segments(cfg.token_layout or {"dense": d}):
            if kind == "dense":
                total += cfg.dense_groups * _linear(w, D)
            elif kind == "seq":
                total += cfg.seq_projections * _linear(w, D)
            else:
                total += _linear(w, D)
        per_layer = 4 * D * D + 3 * D + _linear(D, F) + _linear(F, D) + 4 * D
        return total + cfg.n_layers * per_layer
    if v in ("stack", "parallel-concat"):
        return sum(param_count(c) for c in cfg.children)
    if v == "dhen":
        total = 0
        for layer, width in zip(cfg.children, cfg.layer_widths):
            total += sum(param_count(c) for c in layer)
            total += _linear(sum(output_dim(c) for c in layer), width)
        return total
    if v == "sdcnv3":
        # stub: n_layers deep + n_blocks shallow cross layers, each d -> d/2 -> d
        half = max(1, d // 2)
        return (cfg.n_layers + cfg.n_blocks) * (2 * d * half + d)
    if v == "deeplight":
        # stub: field-weighted pair matrix plus the scaled-up MLP
        return d * d + _mlp([d, *cfg.hidden_sizes, cfg.d_out])
    raise ConfigError(f"unknown variant {v!r}")


__all__ = ["REGISTRY", "build", "param_count", "token_count"]
