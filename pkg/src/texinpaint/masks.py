"""Hole mask generation and hole-ratio bins.

Convention throughout: masks are single-channel float arrays with strictly
binary values, 1.0 = known pixel, 0.0 = hole. On disk they are 8-bit PNGs
with 255 = known, 0 = hole.
"""

from __future__ import annotations

import numpy as np
import cv2
from PIL import Image

# Hole-ratio bins; half-open except the top bin which is closed at 0.5.
BIN_EDGES = {
    "10-20": (0.10, 0.20),
    "20-30": (0.20, 0.30),
    "30-40": (0.30, 0.40),
    "40-50": (0.40, 0.50),
}
BIN_NAMES = tuple(BIN_EDGES) + ("other",)

MIN_SIDE = 32  # smallest image the free-form generator supports


class MaskGenerationError(RuntimeError):
    """Raised when a target hole-ratio bin cannot be reached."""


def hole_ratio(mask: np.ndarray) -> float:
    """Fraction of hole (zero) pixels."""
    mask = np.asarray(mask)
    return float(np.count_nonzero(mask == 0) / mask.size)


def classify(mask: np.ndarray) -> str:
    """Bin a mask by its hole ratio: the four 10-50% bins or ``other``."""
    r = hole_ratio(mask)
    if 0.40 <= r <= 0.50:
        return "40-50"
    for name, (lo, hi) in BIN_EDGES.items():
        if lo <= r < hi:
            return name
    return "other"


def validate_mask(mask: np.ndarray) -> np.ndarray:
    """Check the binary-values / at-least-one-known-pixel invariants."""
    mask = np.asarray(mask)
    values = np.unique(mask)
    if not np.all(np.isin(values, (0.0, 1.0))):
        raise ValueError(f"mask is not binary, found values {values[:8]}")
    if not (mask == 1.0).any():
        raise ValueError("mask has no known pixels")
    return mask


def _draw_stroke(grid: np.ndarray, rng: np.random.Generator, scale: float) -> None:
    h, w = grid.shape
    x = int(rng.integers(0, w))
    y = int(rng.integers(0, h))
    n_vertices = int(rng.integers(1, 13))
    thickness = max(1, round(int(rng.integers(5, 41)) * scale))
    angle = rng.uniform(0.0, 2.0 * np.pi)
    cv2.circle(grid, (x, y), thickness // 2, 0, -1, lineType=cv2.LINE_8)
    for _ in range(n_vertices):
        angle += rng.uniform(-np.pi / 2, np.pi / 2)
        length = rng.uniform(16.0, 64.0) * scale
        nx = int(np.clip(x + length * np.cos(angle), 0, w - 1))
        ny = int(np.clip(y + length * np.sin(angle), 0, h - 1))
        # LINE_8 keeps the raster strictly binary (no antialiasing)
        cv2.line(grid, (x, y), (nx, ny), 0, thickness, lineType=cv2.LINE_8)
        cv2.circle(grid, (nx, ny), thickness // 2, 0, -1, lineType=cv2.LINE_8)
        x, y = nx, ny


def gen_freeform(h: int, w: int, target_bin: str, seed=None, max_tries: int = 200) -> np.ndarray:
    """Free-form brush-stroke mask whose hole ratio lands in ``target_bin``.

    Strokes are random polylines (1-12 vertices, round caps, thickness 5-40 px
    at 256 scale, scaled proportionally for other sizes). Strokes accumulate
    until the ratio reaches the bin's lower edge; overshoots are resampled.
    Deterministic for a fixed seed.
    """
    if target_bin not in BIN_EDGES:
        raise ValueError(f"target_bin must be one of {sorted(BIN_EDGES)}, got {target_bin!r}")
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")

    lo, _ = BIN_EDGES[target_bin]
    rng = np.random.default_rng(seed)
    scale = min(h, w) / 256.0
    for _ in range(max_tries):
        grid = np.ones((h, w), dtype=np.uint8)
        strokes = 0
        while hole_ratio(grid) < lo and strokes < 64:
            _draw_stroke(grid, rng, scale)
            strokes += 1
        if classify(grid) == target_bin:
            return grid.astype(np.float32)
    raise MaskGenerationError(
        f"could not hit bin {target_bin} on a {h}x{w} mask after {max_tries} attempts"
    )


def gen_block(h: int, w: int, seed=None) -> np.ndarray:
    """Single axis-aligned rectangular hole, sides uniform in [H/4, H/2] x [W/4, W/2]."""
    rng = np.random.default_rng(seed)
    bh = int(rng.integers(h // 4, h // 2 + 1))
    bw = int(rng.integers(w // 4, w // 2 + 1))
    top = int(rng.integers(0, h - bh + 1))
    left = int(rng.integers(0, w - bw + 1))
    mask = np.ones((h, w), dtype=np.float32)
    mask[top : top + bh, left : left + bw] = 0.0
    return mask


def gen_outpaint(h: int, w: int) -> np.ndarray:
    """Mask the left and right quarters; the middle half stays known."""
    mask = np.ones((h, w), dtype=np.float32)
    mask[:, : w // 4] = 0.0
    mask[:, (3 * w) // 4 :] = 0.0
    return mask


def save_mask(mask: np.ndarray, path) -> None:
    """Write a mask as an 8-bit PNG (255 = known, 0 = hole)."""
    mask = validate_mask(mask)
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Read a mask PNG back to {0.0, 1.0}; pixels >= 128 count as known."""
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= 128).astype(np.float32)
