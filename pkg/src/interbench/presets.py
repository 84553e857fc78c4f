"""Named model presets mirroring the experiment grids, plus sweep expansion.

Layer counts, ranks, head counts, token dims, block counts, projection ratio and
MaskNet output width follow the published rows. Values marked ``desk-scale`` are
defaults chosen here for the small synthetic setting.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

from .blocks import BlockConfig
from .datagen import default_schema
from .errors import ConfigError
from .model import FeatureSchema, ModelConfig, OptimizerConfig

HEAD_HIDDEN = [128, 64]  # desk-scale default
LOWRANK_SCALE = 16  # desk-scale: published ranks divided by this at d_feat = 64
FINALMLP_OUTPUTS = 16  # desk-scale: fusion logits fed to the shared head
DHEN_WIDTH = 64  # desk-scale default
DHEN_TOKEN_DIM = 16  # desk-scale default


@dataclass
class Preset:
    name: str
    interaction: BlockConfig
    hyperparams: dict = field(default_factory=dict)
    head_hidden: list[int] = field(default_factory=lambda: list(HEAD_HIDDEN))
    concat: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    group: str = ""
    note: str = ""

    def model_config(self, schema: FeatureSchema | None = None, precision: str = "f64") -> ModelConfig:
        return ModelConfig(
            schema=schema or default_schema(),
            interaction=self.interaction,
            head_hidden=list(self.head_hidden),
            concat_input_to_interaction_output=self.concat,
            optimizer=OptimizerConfig(**vars(self.optimizer)),
            precision=precision,
        )


def cross_stack(n: int, variant: str = "cross-full", **kw) -> BlockConfig:
    return BlockConfig("stack", children=[BlockConfig(variant, **kw) for _ in range(n)])


def masknet(kind: str, n_blocks: int, d_out: int = 512) -> BlockConfig:
    return BlockConfig(f"masknet-{kind}", n_blocks=n_blocks, projection_ratio=2.0, d_out=d_out)


def transformer(n_heads: int, token_dim: int, n_layers: int, groups: int = 4, seq: int = 4) -> BlockConfig:
    return BlockConfig(
        "transformer-encoder", n_heads=n_heads, token_dim=token_dim, n_layers=n_layers,
        dense_groups=groups, seq_projections=seq,
    )


def finalmlp(n_heads: int, dim: int, n_layers: int) -> BlockConfig:
    return BlockConfig(
        "finalmlp-fusion", n_heads=n_heads, hidden_sizes=[dim] * n_layers, d_out=FINALMLP_OUTPUTS,
    )


def _dhen_modules():
    mlp = BlockConfig("mlp", hidden_sizes=[DHEN_WIDTH], d_out=DHEN_WIDTH)
    tr = BlockConfig("transformer-encoder", n_heads=2, token_dim=DHEN_TOKEN_DIM, n_layers=1)
    dcn = cross_stack(4)
    mask = masknet("parallel", 3, d_out=DHEN_WIDTH)
    return mlp, tr, dcn, mask


def _build_presets() -> dict[str, Preset]:
    out: dict[str, Preset] = {}

    def add(p: Preset):
        out[p.name] = p

    add(Preset("baseline-dcnv2x4", cross_stack(4), {"nlayer": 4}, group="baseline"))
    for n in range(5, 9):
        add(Preset(f"stack-d{n}", cross_stack(n), {"nlayer": n}, group="DCNv2 Stacked"))
    for n in (2, 3):
        add(Preset(
            f"parallel-dcnv2-{n}",
            BlockConfig("parallel-concat", children=[cross_stack(4) for _ in range(n)]),
            {"nlayer": n}, group="4x DCNv2 Parallel",
        ))
    for r in (512, 1024):
        add(Preset(
            f"lowrank-relu-{r}", cross_stack(4, "cross-lowrank", rank=r // LOWRANK_SCALE, activation="relu"),
            {"rank": r, "desk_rank": r // LOWRANK_SCALE}, group="LR DCNv2 with ReLU",
        ))
    for h, d, n in ((2, 64, 1), (2, 64, 2), (2, 128, 2), (8, 256, 1)):
        add(Preset(f"transformer-h{h}-d{d}-l{n}", transformer(h, d, n), {"nhead": h, "D": d, "nlayer": n},
                   group="Transformer"))
    for h, d, n in ((32, 512, 4), (32, 256, 2), (16, 512, 2), (16, 256, 4)):
        add(Preset(f"finalmlp-h{h}-d{d}-l{n}", finalmlp(h, d, n), {"nhead": h, "D": d, "nlayer": n},
                   group="FinalMLP"))
    for n in range(3, 7):
        add(Preset(f"gdcn-{n}", cross_stack(n, "gated-cross"), {"nlayer": n}, group="GDCN"))
    for kind, label in (("serial", "Stacked"), ("parallel", "Parallel")):
        for n in range(1, 5):
            add(Preset(f"masknet-{kind}-{n}", masknet(kind, n), {"type": label, "nlayer": n}, group="MaskNet"))
    mlp, tr, dcn, mask = _dhen_modules()
    for name, layers, label in (
        ("dhen-mlp-tr-x2", [[mlp, tr], [mlp, tr]], "[[MLP, Transformer], [MLP, Transformer]]"),
        ("dhen-dcn-tr", [[dcn], [tr]], "[[DCNv2], [Transformer]]"),
        ("dhen-dcn-masknet", [[dcn], [mask]], "[[DCNv2], [MaskNet]]"),
        ("dhen-dcn+masknet", [[dcn, mask]], "[[DCNv2, Masknet]]"),
    ):
        add(Preset(name, BlockConfig("dhen", children=layers, layer_widths=[DHEN_WIDTH] * len(layers)),
                   {"configuration": label}, group="DHEN"))
    add(Preset(
        "pinterest-final",
        BlockConfig("stack", children=[masknet("parallel", 3), *cross_stack(4).children]),
        {"masknet_blocks": 3, "ratio": 2.0, "d_out": 512, "dcnv2_on_top": 4},
        head_hidden=[64], concat=False, group="final",
        note="head hidden sizes reduced to [64] (desk-scale value)",
    ))
    add(Preset("linear", BlockConfig("identity"), {}, head_hidden=[], concat=False, group="reference",
               note="logistic model on the feature embedding"))
    add(Preset("stability-probe", cross_stack(4), {"optimizer": "sgd", "lr": 10.0},
               optimizer=OptimizerConfig("sgd", lr=10.0), group="probe", note="diverges by design"))
    add(Preset("unstable-lr", cross_stack(4), {"lr": 0.02}, optimizer=OptimizerConfig("adam", lr=0.02),
               group="probe", note="high learning rate; noisy across seeds"))
    return out


PRESETS: dict[str, Preset] = _build_presets()

SWEEPS: dict[str, list[str]] = {
    "table1": ["stack-d5", "stack-d6", "stack-d7", "stack-d8", "parallel-dcnv2-2", "parallel-dcnv2-3",
               "lowrank-relu-512", "lowrank-relu-1024"],
    "transformer": [n for n, p in PRESETS.items() if p.group == "Transformer"],
    "finalmlp": [n for n, p in PRESETS.items() if p.group == "FinalMLP"],
    "dhen": [n for n, p in PRESETS.items() if p.group == "DHEN"],
    "masknet": [n for n, p in PRESETS.items() if p.group == "MaskNet"],
}

_RANGE = re.compile(r"^(?P<prefix>.*?)(?P<lo>\d+)\.\.(?P<mid>[^\d]*?)(?P<hi>\d+)(?P<suffix>.*)$")


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}") from None


def expand_sweep(spec: str) -> list[str]:
    """Expand ``stack-d5..d8``, ``gdcn-3..6``, a named sweep, or a comma list of those."""
    names: list[str] = []
    for part in (p.strip() for p in spec.split(",")):
        if not part:
            continue
        if part in SWEEPS:
            names += SWEEPS[part]
            continue
        m = _RANGE.match(part)
        if m:
            lo, hi = int(m["lo"]), int(m["hi"])
            if hi < lo:
                raise ConfigError(f"empty sweep range {part!r}")
            names += [f"{m['prefix']}{i}{m['suffix']}" for i in range(lo, hi + 1)]
        else:
            names.append(part)
    missing = [n for n in names if n not in PRESETS]
    if missing:
        raise ConfigError(f"unknown preset(s) in sweep: {', '.join(missing)}")
    return names


def preset_factory(name: str) -> Callable[..., ModelConfig]:
    return get_preset(name).model_config
