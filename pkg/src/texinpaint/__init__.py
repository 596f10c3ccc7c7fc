"""Texture-aware progressive multi-GAN image inpainting."""

__version__ = "0.1.0"

from .lbp import LbpConfig, LbpLayer, lbp_exact, lbp_surrogate, to_gray
from .losses import LossWeights, StageLosses, overall_loss, texture_loss
from .masks import classify, gen_block, gen_freeform, gen_outpaint, hole_ratio
from .nets import (
    GeneratorPyramid,
    count_efficiency,
    build_discriminator,
    build_generator,
    generator_spec,
    init_weights,
)
from .trainer import ProgressiveTrainer, TrainConfig

__all__ = [
    "LbpConfig",
    "LbpLayer",
    "lbp_exact",
    "lbp_surrogate",
    "to_gray",
    "LossWeights",
    "StageLosses",
    "overall_loss",
    "texture_loss",
    "classify",
    "gen_block",
    "gen_freeform",
    "gen_outpaint",
    "hole_ratio",
    "GeneratorPyramid",
    "count_efficiency",
    "build_discriminator",
    "build_generator",
    "generator_spec",
    "init_weights",
    "ProgressiveTrainer",
    "TrainConfig",
]
