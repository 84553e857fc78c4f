"""Declarative block configuration, JSON round-trip and dimension resolution."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from ..errors import ConfigError

VARIANTS = (
    "identity",
    "mlp",
    "cross-full",
    "cross-lowrank",
    "gated-cross",
    "maskblock",
    "masknet-serial",
    "masknet-parallel",
    "finalmlp-fusion",
    "transformer-encoder",
    "stack",
    "parallel-concat",
    "dhen",
    # parameter-count stubs, not buildable
    "sdcnv3",
    "deeplight",
)
CROSS_VARIANTS = ("cross-full", "cross-lowrank", "gated-cross")
STUB_VARIANTS = ("sdcnv3", "deeplight")


@dataclass
class BlockConfig:
    variant: str
    d_in: int | None = None
    d_out: int | None = None
    d_ctx: int | None = None
    rank: int | None = None
    activation: str = "relu"
    n_layers: int = 1
    n_blocks: int = 1
    projection_ratio: float = 2.0
    n_heads: int = 1
    token_dim: int | None = None
    dense_groups: int = 1
    seq_projections: int = 1
    ffn_dim: int | None = None
    hidden_sizes: list[int] = field(default_factory=list)
    children: list[Any] = field(default_factory=list)
    layer_widths: list[int] = field(default_factory=list)
    token_layout: dict | None = None

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"variant": self.variant}
        defaults = BlockConfig(self.variant)
        for f in dataclasses.fields(self):
            if f.name in ("variant", "children"):
                continue
            value = getattr(self, f.name)
            if value != getattr(defaults, f.name):
                out[f.name] = value
        if self.children:
            if self.variant == "dhen":
                out["children"] = [[c.to_dict() for c in layer] for layer in self.children]
            else:
                out["children"] = [c.to_dict() for c in self.children]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BlockConfig":
        if not isinstance(data, dict) or "variant" not in data:
            raise ConfigError("block config must be an object with a 'variant' key")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown block config field(s): {', '.join(unknown)}")
        kwargs = dict(data)
        raw_children = kwargs.pop("children", [])
        if data["variant"] == "dhen":
            children = [[cls.from_dict(c) for c in layer] for layer in raw_children]
        else:
            children = [cls.from_dict(c) for c in raw_children]
        kwargs["hidden_sizes"] = list(kwargs.get("hidden_sizes", []))
        kwargs["layer_widths"] = list(kwargs.get("layer_widths", []))
        return cls(children=children, **kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    # -- validation ----------------------------------------------------

    def problems(self, path: str = "interaction") -> list[str]:
        """Every invariant violation, not just the first."""
        errs: list[str] = []
        v = self.variant
        if v not in VARIANTS:
            return [f"{path}.variant: unknown variant {v!r}"]
        if self.d_in is None or self.d_in < 1:
            errs.append(f"{path}.d_in: must be >= 1 (got {self.d_in})")
        if self.d_out is not None and self.d_out < 1:
            errs.append(f"{path}.d_out: must be >= 1 (got {self.d_out})")
        if self.activation not in ("none", "relu"):
            errs.append(f"{path}.activation: must be 'none' or 'relu'")
        if not self.projection_ratio > 0:
            errs.append(f"{path}.projection_ratio: must be > 0")
        if v in CROSS_VARIANTS and self.d_out is not None and self.d_in is not None and self.d_out != self.d_in:
            errs.append(f"{path}.d_out: cross layers keep d_out == d_in")
        if v == "cross-lowrank":
            if self.rank is None or self.rank < 1:
                errs.append(f"{path}.rank: required and >= 1")
            elif self.d_in is not None and self.rank > self.d_in:
                errs.append(f"{path}.rank: must be <= d_in ({self.rank} > {self.d_in})")
        if v in ("mlp", "maskblock", "masknet-serial", "masknet-parallel", "finalmlp-fusion", "deeplight") and self.d_out is None:
            errs.append(f"{path}.d_out: required for {v}")
        if v in ("masknet-serial", "masknet-parallel") and self.n_blocks < 1:
            errs.append(f"{path}.n_blocks: must be >= 1")
        if v == "finalmlp-fusion":
            if not self.hidden_sizes:
                errs.append(f"{path}.hidden_sizes: finalmlp streams need at least one layer")
            elif self.n_heads < 1 or self.hidden_sizes[-1] % self.n_heads:
                errs.append(
                    f"{path}.n_heads: stream width {self.hidden_sizes[-1]} not divisible by k={self.n_heads}"
                )
        if v == "transformer-encoder":
            if self.token_dim is None or self.token_dim < 1:
                errs.append(f"{path}.token_dim: required and >= 1")
            elif self.n_heads < 1 or self.token_dim % self.n_heads:
                errs.append(f"{path}.n_heads: must divide token_dim")
            if self.n_layers < 1:
                errs.append(f"{path}.n_layers: must be >= 1")
            if self.dense_groups < 0 or self.seq_projections < 0:
                errs.append(f"{path}: dense_groups and seq_projections must be >= 0")
        if v in ("stack", "parallel-concat"):
            if not self.children:
                errs.append(f"{path}.children: must be non-empty")
            for i, c in enumerate(self.children):
                errs.extend(c.problems(f"{path}.children[{i}]"))
        if v == "dhen":
            if not self.children or any(not layer for layer in self.children):
                errs.append(f"{path}.children: dhen needs a non-empty list of non-empty lists")
            if len(self.layer_widths) != len(self.children):
                errs.append(f"{path}.layer_widths: need one width per dhen layer")
            elif any(w < 1 for w in self.layer_widths):
                errs.append(f"{path}.layer_widths: widths must be >= 1")
            for i, layer in enumerate(self.children):
                for j, c in enumerate(layer):
                    errs.extend(c.problems(f"{path}.children[{i}][{j}]"))
        if v == "stack" and not errs:
            prev = self.d_in
            for i, c in enumerate(self.children):
                if c.d_in != prev:
                    errs.append(f"{path}.children[{i}].d_in: expected {prev}, got {c.d_in}")
                prev = output_dim(c)
        if v == "parallel-concat" and not errs:
            for i, c in enumerate(self.children):
                if c.d_in != self.d_in:
                    errs.append(f"{path}.children[{i}].d_in: expected {self.d_in}, got {c.d_in}")
        return errs

    def validate(self) -> "BlockConfig":
        errs = self.problems()
        if errs:
            raise ConfigError("invalid block config:\n  " + "\n  ".join(errs))
        return self


def token_count(cfg: BlockConfig) -> int:
    layout = cfg.token_layout or {"dense": cfg.d_in}
    n = len(layout.get("sparse", [])) + len(layout.get("embedding", []))
    if layout.get("dense", 0):
        n += cfg.dense_groups
    if layout.get("seq", 0):
        n += cfg.seq_projections
    return n


def output_dim(cfg: BlockConfig) -> int:
    v = cfg.variant
    if v in CROSS_VARIANTS or v == "identity":
        return cfg.d_in
    if v in ("mlp", "maskblock", "masknet-serial", "finalmlp-fusion", "deeplight"):
        return cfg.d_out
    if v == "masknet-parallel":
        return cfg.n_blocks * cfg.d_out
    if v == "transformer-encoder":
        return token_count(cfg) * cfg.token_dim
    if v == "stack":
        return output_dim(cfg.children[-1])
    if v == "parallel-concat":
        return sum(output_dim(c) for c in cfg.children)
    if v == "dhen":
        return cfg.layer_widths[-1]
    if v == "sdcnv3":
        return cfg.d_in
    raise ConfigError(f"unknown variant {v!r}")


def resolve(cfg: BlockConfig, d_in: int, d_ctx: int | None = None, layout: dict | None = None) -> BlockConfig:
    """Fill in input/context widths down the tree.

    ``layout`` describes how the raw feature embedding splits into segments; it
    reaches only transformer blocks that read the feature embedding directly.
    """
    d_ctx = d_in if d_ctx is None else d_ctx
    c = dataclasses.replace(cfg, d_in=d_in, hidden_sizes=list(cfg.hidden_sizes), layer_widths=list(cfg.layer_widths))
    v = c.variant
    if v in CROSS_VARIANTS and c.d_out is None:
        c.d_out = d_in
    if v in ("maskblock", "masknet-serial", "masknet-parallel"):
        c.d_ctx = d_ctx
    if v == "transformer-encoder" and c.token_layout is None and layout is not None:
        c.token_layout = dict(layout)
    if v == "stack":
        kids = []
        prev = d_in
        for i, child in enumerate(cfg.children):
            r = resolve(child, prev, d_ctx, layout if i == 0 else None)
            kids.append(r)
            prev = output_dim(r)
        c.children = kids
    elif v == "parallel-concat":
        c.children = [resolve(child, d_in, d_ctx, layout) for child in cfg.children]
    elif v == "dhen":
        layers = []
        width = d_in
        for i, layer in enumerate(cfg.children):
            layers.append([resolve(m, width, d_ctx, layout if i == 0 else None) for m in layer])
            if i < len(cfg.layer_widths):
                width = cfg.layer_widths[i]
        c.children = layers
    return c
