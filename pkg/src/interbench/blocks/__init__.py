"""Feature-interaction blocks with hand-derived backward passes."""

from .base import MLP, Block, Identity
from .catalog import REGISTRY, build, param_count
from .compose import DHEN, ParallelConcat, Stack
from .config import CROSS_VARIANTS, VARIANTS, BlockConfig, output_dim, resolve, token_count
from .cross import CrossFull, CrossLowRank, GatedCross
from .finalmlp import FinalMLP, finalmlp_fusion
from .masknet import MaskBlock, MaskNet, aggregation_width
from .transformer import EncoderLayer, TransformerEncoder, feature_segments, tokenize_features

__all__ = [
    "CROSS_VARIANTS",
    "DHEN",
    "MLP",
    "REGISTRY",
    "VARIANTS",
    "Block",
    "BlockConfig",
    "CrossFull",
    "CrossLowRank",
    "EncoderLayer",
    "FinalMLP",
    "GatedCross",
    "Identity",
    "MaskBlock",
    "MaskNet",
    "ParallelConcat",
    "Stack",
    "TransformerEncoder",
    "aggregation_width",
    "build",
    "feature_segments",
    "finalmlp_fusion",
    "output_dim",
    "param_count",
    "resolve",
    "token_count",
    "tokenize_features",
]
