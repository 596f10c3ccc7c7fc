"""Local binary pattern operators.

The exact operator thresholds each 3x3 neighborhood against its center pixel
and packs the eight comparison bits into a code image. The differentiable
layer replaces the hard threshold with eight fixed difference kernels plus
rectification so the code image can sit inside a loss term; on binary images
the two agree exactly (up to the /255 normalization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

# Row-major walk over the 3x3 window, center excluded: TL, T, TR, L, R, BL, B, BR.
# Bit i carries weight 2**i; the oracle and the layer share this ordering.
NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
CODES = tuple(1 << i for i in range(8))

# Luminance coefficients; they sum to 0.996 and are used as written.
GRAY_WEIGHTS = (0.299, 0.587, 0.110)


@dataclass(frozen=True)
class LbpConfig:
    """Settings for the 3x3 LBP operators.

    ``ties_as_one`` applies to the exact operator only: when set, a neighbor
    equal to the center counts as a set bit. The differentiable layer has no
    tie notion (a zero difference is rectified to zero either way).
    """

    dilation: int = 1
    ties_as_one: bool = False

    def __post_init__(self):
        if self.dilation < 1:
            raise ValueError(f"dilation must be a positive integer, got {self.dilation}")

    @property
    def min_side(self) -> int:
        """Smallest image side the dilated 3x3 neighborhood fits into."""
        return 2 * self.dilation + 1


def to_gray(image):
    """Luminance of an RGB image: 0.299 r + 0.587 g + 0.110 b.

    Accepts numpy arrays and torch tensors shaped (3, H, W) or (N, 3, H, W);
    returns (H, W) or (N, H, W) respectively. The coefficients deliberately
    do not sum to 1 and are not renormalized.
    """
    if image.ndim < 3 or image.shape[-3] != 3:
        raise ValueError(f"expected 3 channels in axis -3, got shape {tuple(image.shape)}")
    r = image[..., 0, :, :]
    g = image[..., 1, :, :]
    b = image[..., 2, :, :]
    return GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b


def to_byte_range(x):
    """Map network-range values in [-1, 1] to byte-range [0, 255]."""
    return (x + 1.0) * 127.5


def _check_gray_size(h: int, w: int, cfg: LbpConfig) -> None:
    if h < cfg.min_side or w < cfg.min_side:
        raise ValueError(
            f"image {h}x{w} too small for 3x3 LBP with dilation {cfg.dilation} "
            f"(needs at least {cfg.min_side} per side)"
        )


def lbp_exact(img: np.ndarray, cfg: LbpConfig = LbpConfig()) -> np.ndarray:
    """Reference LBP code image, shrunk by ``dilation`` on every side.

    Bit i is set when neighbor i is strictly greater than the center
    (``cfg.ties_as_one`` switches to >=). Output is uint8; this operator is
    the brute-force oracle the differentiable layer is tested against.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("grayscale image contains non-finite values")
    h, w = img.shape
    _check_gray_size(h, w, cfg)

    d = cfg.dilation
    center = img[d : h - d, d : w - d]
    codes = np.zeros(center.shape, dtype=np.uint8)
    for code, (dy, dx) in zip(CODES, NEIGHBOR_OFFSETS):
        nb = img[d + dy * d : h - d + dy * d, d + dx * d : w - d + dx * d]
        bits = (nb >= center) if cfg.ties_as_one else (nb > center)
        codes += code * bits.astype(np.uint8)
    return codes


class LbpLayer(nn.Module):
    """Differentiable LBP as a fixed-weight convolution stack.

    Eight 3x3 kernels, each all-zero except center = -1 and one neighbor
    position = +1; positive differences are rectified, weighted by the binary
    codes, summed over the eight channels and divided by 255. Adds no
    learnable parameters to any network containing it.
    """

    def __init__(self, dilation: int = 1):
        super().__init__()
        if dilation < 1:
            raise ValueError(f"dilation must be a positive integer, got {dilation}")
        self.dilation = dilation

        kernels = torch.zeros(8, 1, 3, 3)
        for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
            kernels[i, 0, 1, 1] = -1.0
            kernels[i, 0, 1 + dy, 1 + dx] = 1.0
        self.register_buffer("kernels", kernels)
        self.register_buffer("codes", torch.tensor(CODES, dtype=torch.float32).view(1, 8, 1, 1))

    def forward(self, gray: torch.Tensor) -> torch.Tensor:
        """Apply the layer to (H, W), (N, H, W) or (N, 1, H, W) grayscale input."""
        ndim = gray.ndim
        if ndim == 2:
            x = gray.view(1, 1, *gray.shape)
        elif ndim == 3:
            x = gray.unsqueeze(1)
        elif ndim == 4:
            if gray.shape[1] != 1:
                raise ValueError(f"expected a single channel, got shape {tuple(gray.shape)}")
            x = gray
        else:
            raise ValueError(f"unsupported input rank {ndim}")
        _check_gray_size(x.shape[-2], x.shape[-1], LbpConfig(dilation=self.dilation))

        diffs = F.conv2d(x, self.kernels.to(x.dtype), dilation=self.dilation)
        weighted = F.relu(diffs) * self.codes.to(x.dtype)
        out = weighted.sum(dim=1, keepdim=True) / 255.0

        if ndim == 2:
            return out[0, 0]
        if ndim == 3:
            return out[:, 0]
        return out


def lbp_surrogate(img, cfg: LbpConfig = LbpConfig()):
    """Functional form of :class:`LbpLayer`.

    Numpy input runs in float64 and returns numpy; torch input stays on the
    autograd graph and keeps its dtype.
    """
    layer = LbpLayer(cfg.dilation)
    if isinstance(img, torch.Tensor):
        return layer(img)
    arr = torch.from_numpy(np.asarray(img, dtype=np.float64))
    return layer(arr).numpy()
