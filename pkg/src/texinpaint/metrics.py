"""Image-quality metrics, edge-recovery scoring and runtime benchmarking.

Metric inputs are channel-first numpy arrays (C, H, W) or plain 2-D arrays
with values in [0, 1] (network outputs go through (x + 1) / 2 first).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from skimage.feature import canny
from skimage.metrics import structural_similarity

from .lbp import to_gray
from .masks import BIN_EDGES, gen_freeform
from .nets import GeneratorPyramid, composite


def _as_float(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def mae(output, target) -> float:
    """Mean absolute error."""
    o, t = _as_float(output), _as_float(target)
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
    return float(np.mean(np.abs(o - t)))


def psnr(output, target) -> float:
    """Peak signal-to-noise ratio on [0, 1] images; infinity for identical inputs."""
    o, t = _as_float(output), _as_float(target)
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
    mse = float(np.mean((o - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def hole_psnr(output, target, mask) -> float:
    """PSNR restricted to hole pixels (mask == 0)."""
    o, t = _as_float(output), _as_float(target)
    hole = np.asarray(mask) == 0
    if not hole.any():
        raise ValueError("mask has no hole pixels")
    if o.ndim == 3:
        hole = np.broadcast_to(hole[None], o.shape)
    mse = float(np.mean((o[hole] - t[hole]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(output, target) -> float:
    """Structural similarity: 11x11 Gaussian window (sigma 1.5), K1/K2 = 0.01/0.03,
    averaged over channels."""
    o, t = _as_float(output), _as_float(target)
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
    if o.ndim == 2:
        o, t = o[None], t[None]
    scores = [
        structural_similarity(
            oc,
            tc,
            win_size=11,
            gaussian_weights=True,
            sigma=1.5,
            K1=0.01,
            K2=0.03,
            use_sample_covariance=False,
            data_range=1.0,
        )
        for oc, tc in zip(o, t)
    ]
    return float(np.mean(scores))


@dataclass(frozen=True)
class CannyConfig:
    """Edge detector settings; hysteresis thresholds act on [0, 1] gradients."""

    sigma: float = 1.0
    low_threshold: float = 0.1
    high_threshold: float = 0.2


@dataclass
class EdgeReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    true_pos: int = 0
    false_pos: int = 0
    false_neg: int = 0
    true_neg: int = 0


def _luminance(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    return np.asarray(to_gray(img))


def edge_metrics(output, target, mask, config: CannyConfig = CannyConfig()) -> EdgeReport:
    """Edge recovery inside the hole.

    Canny (identical settings) runs on both images; ground-truth edges are the
    labels, predicted edges the predictions, restricted to pixels with mask == 0.
    """
    o, t = _as_float(output), _as_float(target)
    hole = np.asarray(mask) == 0
    if not hole.any():
        raise ValueError("mask has no hole pixels; edge metrics are undefined")

    pred = canny(
        _luminance(o),
        sigma=config.sigma,
        low_threshold=config.low_threshold,
        high_threshold=config.high_threshold,
    )
    label = canny(
        _luminance(t),
        sigma=config.sigma,
        low_threshold=config.low_threshold,
        high_threshold=config.high_threshold,
    )
    p, l = pred[hole], label[hole]
    tp = int(np.count_nonzero(p & l))
    fp = int(np.count_nonzero(p & ~l))
    fn = int(np.count_nonzero(~p & l))
    tn = int(np.count_nonzero(~p & ~l))
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EdgeReport(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        true_pos=tp,
        false_pos=fp,
        false_neg=fn,
        true_neg=tn,
    )


@dataclass
class BenchResult:
    mean_ms: float
    p95_ms: float
    samples_ms: list[float] = field(default_factory=list)


def bench(pyramid: GeneratorPyramid, iters: int = 100, size: int = 256, warmup: int = 3, seed: int = 0) -> BenchResult:
    """Time full-pyramid inferences; absolute numbers are hardware-relative."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    gen = torch.Generator().manual_seed(seed)
    img = torch.rand((1, 3, size, size), generator=gen) * 2.0 - 1.0
    mask = (torch.rand((1, 1, size, size), generator=gen) > 0.3).float()
    samples = []
    with torch.no_grad():
        for _ in range(warmup):
            pyramid(img * mask, mask)
        for _ in range(iters):
            start = time.perf_counter()
            pyramid(img * mask, mask)
            samples.append((time.perf_counter() - start) * 1000.0)
    return BenchResult(
        mean_ms=float(np.mean(samples)),
        p95_ms=float(np.percentile(samples, 95)),
        samples_ms=samples,
    )


@dataclass
class BinMetrics:
    count: int = 0
    mae: float = 0.0
    ssim: float = 0.0
    psnr: float = 0.0
    hole_psnr: float = 0.0


@dataclass
class EvalReport:
    bins: dict[str, BinMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {name: vars(m).copy() for name, m in self.bins.items()}

    def to_csv(self) -> str:
        lines = ["bin,count,mae,ssim,psnr,hole_psnr"]
        for name, m in self.bins.items():
            lines.append(f"{name},{m.count},{m.mae:.6f},{m.ssim:.6f},{m.psnr:.4f},{m.hole_psnr:.4f}")
        return "\n".join(lines) + "\n"


def item_mask(shape: tuple[int, int], bin_name: str, seed: int, index: int) -> np.ndarray:
    """Deterministic per-item evaluation mask (shared with the CLI oracle)."""
    return gen_freeform(shape[0], shape[1], bin_name, seed=seed * 100003 + index)


def evaluate(
    pyramid: GeneratorPyramid,
    dataset,
    bins=tuple(BIN_EDGES),
    seed: int = 0,
    use_composite: bool = True,
) -> EvalReport:
    """Per-bin MAE / SSIM / PSNR (plus hole-region PSNR) over a dataset.

    Every item is evaluated once per requested bin with a deterministic
    free-form mask; aggregation is the plain mean over items in the bin.
    """
    accum: dict[str, list[tuple[float, float, float, float]]] = {b: [] for b in bins}
    with torch.no_grad():
        for idx in range(len(dataset)):
            img = dataset[idx]
            h, w = img.shape[-2:]
            for bin_name in bins:
                m = item_mask((h, w), bin_name, seed, idx)
                mask_t = torch.from_numpy(m).view(1, 1, h, w)
                img_t = img.unsqueeze(0)
                out = pyramid(img_t * mask_t, mask_t).final
                if use_composite:
                    out = composite(out, img_t, mask_t)
                o = ((out[0] + 1.0) / 2.0).clamp(0.0, 1.0).numpy()
                t = ((img + 1.0) / 2.0).clamp(0.0, 1.0).numpy()
                accum[bin_name].append(
                    (mae(o, t), ssim(o, t), psnr(o, t), hole_psnr(o, t, m))
                )
    report = EvalReport()
    for bin_name, rows in accum.items():
        if not rows:
            continue
        arr = np.asarray(rows, dtype=np.float64)
        report.bins[bin_name] = BinMetrics(
            count=len(rows),
            mae=float(arr[:, 0].mean()),
            ssim=float(arr[:, 1].mean()),
            psnr=float(arr[:, 2].mean()),
            hole_psnr=float(arr[:, 3].mean()),
        )
    return report
