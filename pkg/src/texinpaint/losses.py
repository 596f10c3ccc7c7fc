"""Loss terms: reconstruction, least-squares adversarial and LBP texture."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .lbp import LbpConfig, LbpLayer, to_byte_range, to_gray

# the texture term applies only at the final stage of the pyramid
TEXTURE_STAGE = 256


@dataclass(frozen=True)
class LossWeights:
    adv: float = 0.1
    rec: float = 1.0
    texture: float = 10.0

    def __post_init__(self):
        if self.adv < 0 or self.rec < 0 or self.texture < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class StageLosses:
    """Scalar loss terms of one training step at one stage."""

    rec: float
    adv: float
    dis: float
    texture: Optional[float] = None


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(output, target):
    """Mean absolute difference (mean reduction keeps weights size-independent)."""
    _check_same_shape(output, target, "l1_loss")
    return (output - target).abs().mean()


def lsgan_d_loss(real_scores, fake_scores):
    """Least-squares discriminator objective: real toward 1, fake toward 0."""
    _check_same_shape(real_scores, fake_scores, "lsgan_d_loss")
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def lsgan_g_loss(fake_scores):
    """Least-squares generator objective: fake scores toward 1."""
    return ((fake_scores - 1.0) ** 2).mean()


class TextureLoss(nn.Module):
    """Mean L1 between the LBP maps of two images in [-1, 1].

    Images are mapped to byte-range grayscale before the differentiable LBP;
    the maps shrink by the dilation, so the L1 runs on the cropped grid.
    """

    def __init__(self, dilation: int = 1):
        super().__init__()
        self.layer = LbpLayer(dilation)

    def forward(self, output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        _check_same_shape(output, target, "texture_loss")
        if output.shape[-2:] != (TEXTURE_STAGE, TEXTURE_STAGE):
            raise ValueError(
                f"texture loss expects {TEXTURE_STAGE}x{TEXTURE_STAGE} images, "
                f"got {tuple(output.shape[-2:])}"
            )
        out_map = self.layer(to_gray(to_byte_range(output)))
        ref_map = self.layer(to_gray(to_byte_range(target)))
        return (out_map - ref_map).abs().mean()


def texture_loss(output, target, cfg: LbpConfig = LbpConfig()):
    """Functional form of :class:`TextureLoss`."""
    return TextureLoss(cfg.dilation)(output, target)


def overall_loss(stage: int, losses: StageLosses, weights: LossWeights = LossWeights()):
    """Weighted sum of the generator-side terms for one stage.

    The texture term is only permitted at the final stage; passing one for a
    lower stage is an error rather than a silent drop.
    """
    if losses.texture is not None and stage != TEXTURE_STAGE:
        raise ValueError(f"texture loss only applies at stage {TEXTURE_STAGE}, got stage {stage}")
    total = weights.adv * losses.adv + weights.rec * losses.rec
    if losses.texture is not None:
        total = total + weights.texture * losses.texture
    return total
