"""Dataset ingestion and synthetic texture corpora."""

from __future__ import annotations

import logging
from pathlib import Path

import cv2
import numpy as np
import torch
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


class ImageFolder:
    """Recursively indexed image directory; items decode to (3, R, R) in [-1, 1].

    Indexing order is the sorted path list, so iteration is deterministic.
    Augmentation flags are carried here but applied by the training loop from
    its own seeded stream.
    """

    def __init__(self, root, split: str = "train", resolution: int = 256, hflip: bool = False):
        self.root = Path(root)
        self.split = split
        self.resolution = resolution
        self.hflip = hflip
        self.paths: list[Path] = []
        if not self.root.is_dir():
            raise FileNotFoundError(f"dataset root {self.root} does not exist")
        for p in sorted(self.root.rglob("*")):
            if p.is_dir():
                continue
            if p.suffix.lower() in IMAGE_EXTS:
                self.paths.append(p)
            else:
                log.info("skipping non-image file %s", p)
        if not self.paths:
            log.warning("no images found under %s (split=%s)", self.root, split)

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, idx: int) -> torch.Tensor:
        img = Image.open(self.paths[idx]).convert("RGB")
        w, h = img.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        img = img.crop((left, top, left + side, top + side))
        img = img.resize((self.resolution, self.resolution), Image.Resampling.BICUBIC)
        arr = np.asarray(img, dtype=np.float32).transpose(2, 0, 1)
        return torch.from_numpy(arr / 127.5 - 1.0)


def ingest(root, split: str = "train", resolution: int = 256, hflip: bool = False) -> ImageFolder:
    """Index a directory of images for training or evaluation."""
    return ImageFolder(root, split=split, resolution=resolution, hflip=hflip)


class ArrayDataset:
    """In-memory dataset over a (N, 3, R, R) tensor in [-1, 1]."""

    def __init__(self, images: torch.Tensor, hflip: bool = False):
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (N, 3, H, W) images, got {tuple(images.shape)}")
        self.images = images
        self.hflip = hflip

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, idx: int) -> torch.Tensor:
        return self.images[idx]


def _grating(rng: np.random.Generator, size: int) -> np.ndarray:
    # two superimposed waves: a coarse carrier the low-resolution stages can
    # learn plus a finer component that only matters at full resolution
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    img = np.zeros((3, size, size), dtype=np.float32)
    for freq_range, weight in (((2.0, 8.0), 0.7), ((8.0, 24.0), 0.3)):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(*freq_range)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.cos(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += weight * wave[None]
    for c in range(3):
        img[c] = rng.uniform(0.5, 1.0) * img[c] + rng.uniform(-0.3, 0.3)
    return np.clip(img, -1.0, 1.0)


def _checker(rng: np.random.Generator, size: int) -> np.ndarray:
    cell = int(rng.integers(size // 32, size // 5))
    yy, xx = np.mgrid[0:size, 0:size]
    board = ((xx // max(1, cell) + yy // max(1, cell)) % 2).astype(np.float32)
    a = rng.uniform(-1.0, 1.0, size=3).astype(np.float32)
    b = rng.uniform(-1.0, 1.0, size=3).astype(np.float32)
    return a[:, None, None] * board + b[:, None, None] * (1.0 - board)


def _dots(rng: np.random.Generator, size: int) -> np.ndarray:
    canvas = np.full((size, size, 3), rng.uniform(0.2, 0.8, size=3), dtype=np.float32)
    for _ in range(int(rng.integers(15, 40))):
        center = (int(rng.integers(0, size)), int(rng.integers(0, size)))
        radius = int(rng.integers(max(2, size // 32), max(3, size // 8)))
        color = tuple(float(v) for v in rng.uniform(0.0, 1.0, size=3))
        cv2.circle(canvas, center, radius, color, -1, lineType=cv2.LINE_8)
    return canvas.transpose(2, 0, 1) * 2.0 - 1.0


def synthetic_textures(n: int, size: int = 256, seed: int = 0, hflip: bool = False) -> ArrayDataset:
    """Procedural texture images (gratings, checkers, dot fields) in [-1, 1].

    Deterministic for a fixed seed; intended for desk-scale training runs and
    the test suite, not as a stand-in for a real corpus.
    """
    rng = np.random.default_rng(seed)
    makers = (_grating, _checker, _dots)
    images = np.stack([makers[int(rng.integers(0, 3))](rng, size) for _ in range(n)])
    return ArrayDataset(torch.from_numpy(np.clip(images, -1.0, 1.0)), hflip=hflip)


def synthetic_textures_shared_detail(
    n: int, size: int = 256, seed: int = 0, detail_amp: float = 0.08
) -> ArrayDataset:
    """Texture family whose fine detail pattern is identical across images.

    Random-phase carriers vary per image; a single low-amplitude 12-cycle
    grating is shared by the whole corpus, so the fine detail is fully
    predictable from context. This is the regime texture-supervision
    experiments need: plain pixel losses under-weight the low-amplitude
    detail, while a texture descriptor amplifies it.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    th = np.pi / 6
    detail = np.cos(2 * np.pi * 12.0 * (np.cos(th) * xx + np.sin(th) * yy)).astype(np.float32)
    base = np.array([0.55, 0.50, 0.45], dtype=np.float32)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        theta = rng.uniform(0, np.pi)
        carrier = np.cos(
            2 * np.pi * rng.uniform(3.0, 6.0) * (np.cos(theta) * xx + np.sin(theta) * yy)
            + rng.uniform(0, 2 * np.pi)
        )
        amp = rng.uniform(0.18, 0.28)
        for c in range(3):
            out[i, c] = (
                base[c]
                + rng.uniform(-0.08, 0.08)
                + amp * rng.uniform(0.9, 1.1) * carrier
                + detail_amp * detail
            )
    return ArrayDataset(torch.from_numpy(np.clip(out, -1.0, 1.0)))


def synthetic_texture_family(n: int, size: int = 256, seed: int = 0) -> ArrayDataset:
    """A coherent texture corpus: one palette, varying wave structure.

    All images share a bright base color with random-phase carrier waves plus
    a fine high-frequency component on top. The shared statistics make
    training progress visible within a few hundred steps, which is what the
    convergence smoke tests need; the fine component keeps the images
    texture-rich at full resolution.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    base = np.array([0.55, 0.50, 0.45], dtype=np.float32)
    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        theta = rng.uniform(0, np.pi)
        carrier = np.cos(
            2 * np.pi * rng.uniform(3.0, 6.0) * (np.cos(theta) * xx + np.sin(theta) * yy)
            + rng.uniform(0, 2 * np.pi)
        )
        theta2 = rng.uniform(0, np.pi)
        fine = np.cos(
            2 * np.pi * rng.uniform(12.0, 24.0) * (np.cos(theta2) * xx + np.sin(theta2) * yy)
            + rng.uniform(0, 2 * np.pi)
        )
        amp = rng.uniform(0.18, 0.28)
        for c in range(3):
            color = base[c] + rng.uniform(-0.08, 0.08)
            scale = rng.uniform(0.9, 1.1)
            images[i, c] = color + amp * scale * carrier + 0.10 * fine
    return ArrayDataset(torch.from_numpy(np.clip(images, -1.0, 1.0)))
