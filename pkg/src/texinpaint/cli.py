"""Command-line entry points; each subcommand is a thin wrapper over the library."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import data, masks, metrics
from .lbp import LbpConfig, lbp_exact, lbp_surrogate, to_gray
from .nets import GeneratorPyramid, count_efficiency, init_weights
from .trainer import ProgressiveTrainer, TrainConfig, load_pyramid

log = logging.getLogger(__name__)


def _load_dataset(spec: str, resolution: int = 256):
    """``DIR`` for an image folder, ``synthetic[:N[:SEED]]`` for procedural textures."""
    if spec.startswith("synthetic"):
        parts = spec.split(":")
        n = int(parts[1]) if len(parts) > 1 else 64
        seed = int(parts[2]) if len(parts) > 2 else 0
        return data.synthetic_textures(n, size=resolution, seed=seed)
    return data.ingest(spec, resolution=resolution)


def _load_pyramid_arg(ckpt: str | None, seed: int = 0) -> GeneratorPyramid:
    if ckpt:
        pyramid, _ = load_pyramid(ckpt)
        return pyramid
    log.warning("no checkpoint given; using randomly initialized weights")
    pyramid = GeneratorPyramid()
    init_weights(pyramid, generator=torch.Generator().manual_seed(seed))
    pyramid.eval()
    pyramid.requires_grad_(False)
    return pyramid


def _read_image(path) -> torch.Tensor:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32).transpose(2, 0, 1)
    return torch.from_numpy(arr / 127.5 - 1.0).unsqueeze(0)


def _write_image(t: torch.Tensor, path) -> None:
    arr = ((t[0].clamp(-1, 1) + 1) * 127.5).round().to(torch.uint8).permute(1, 2, 0).numpy()
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def cmd_train(args) -> int:
    base = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = base.to_dict()
    if args.stages:
        overrides["stages"] = [int(s) for s in args.stages.split(",")]
    if args.steps:
        steps = [int(s) for s in args.steps.split(",")]
        if len(steps) != len(overrides["stages"]):
            print(
                f"error: --steps needs one value per stage ({len(overrides['stages'])}), got {len(steps)}",
                file=sys.stderr,
            )
            return 2
        overrides["steps_per_stage"] = dict(zip(overrides["stages"], steps))
    if args.epochs is not None:
        overrides["epochs_per_stage"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.blind:
        overrides["blind"] = True
    if args.no_texture_loss:
        overrides["use_texture_loss"] = False
    cfg = TrainConfig.from_dict(overrides)

    dataset = _load_dataset(args.data)
    trainer = ProgressiveTrainer(cfg, dataset, out_dir=args.out)
    final = trainer.train_all()
    print(f"trained stages {trainer.completed_stages}; checkpoint: {final}")
    return 0


def cmd_infer(args) -> int:
    img = _read_image(args.image)
    mask = None
    if args.mask:
        mask = torch.from_numpy(masks.load_mask(args.mask)).unsqueeze(0).unsqueeze(0)
        if mask.shape[-2:] != img.shape[-2:]:
            print(
                f"error: mask size {tuple(mask.shape[-2:])} does not match "
                f"image size {tuple(img.shape[-2:])}",
                file=sys.stderr,
            )
            return 2
    pyramid = _load_pyramid_arg(args.ckpt)
    if mask is None:
        if not pyramid.blind:
            print("error: --mask is required for a mask-conditioned model", file=sys.stderr)
            return 2
        mask = torch.ones(1, 1, *img.shape[-2:])

    from .service import inpaint_tensor

    out, outputs = inpaint_tensor(pyramid, img, mask, use_composite=not args.raw)
    _write_image(out, args.out)
    if args.pyramid:
        pyr_dir = Path(args.pyramid)
        pyr_dir.mkdir(parents=True, exist_ok=True)
        for n in pyramid.stages:
            if n in outputs:
                _write_image(outputs[n], pyr_dir / f"stage{n}.png")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    pyramid = _load_pyramid_arg(args.ckpt)
    dataset = _load_dataset(args.data)
    bins = tuple(masks.BIN_EDGES) if args.bins == "all" else tuple(args.bins.split(","))
    report = metrics.evaluate(pyramid, dataset, bins=bins, seed=args.seed)
    out = Path(args.out)
    if out.suffix == ".csv":
        out.write_text(report.to_csv())
    else:
        out.write_text(json.dumps(report.to_dict(), indent=2))
    for name, m in report.bins.items():
        print(f"{name}: n={m.count} mae={m.mae:.4f} ssim={m.ssim:.4f} psnr={m.psnr:.2f}")
    print(f"wrote {out}")
    return 0


def cmd_bench(args) -> int:
    pyramid = _load_pyramid_arg(args.ckpt)
    report = count_efficiency({n: pyramid.specs[n] for n in pyramid.stages})
    result = metrics.bench(pyramid, iters=args.iters)
    print("model | GFLOPs | params (M) | CPU mean (ms) | CPU p95 (ms)")
    print(
        f"ours | {report.gflops:.1f} | {report.params_millions:.1f} | "
        f"{result.mean_ms:.0f} | {result.p95_ms:.0f}"
    )
    return 0


def cmd_maskgen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        if args.kind == "freeform":
            m = masks.gen_freeform(args.height, args.width, args.bin, seed=args.seed + i)
        elif args.kind == "block":
            m = masks.gen_block(args.height, args.width, seed=args.seed + i)
        else:
            m = masks.gen_outpaint(args.height, args.width)
        masks.save_mask(m, out / f"mask_{i:04d}.png")
    print(f"wrote {args.n} masks to {out}")
    return 0


def cmd_lbp(args) -> int:
    img = Image.open(args.input)
    if img.mode == "L":
        gray = np.asarray(img, dtype=np.float64)
    else:
        gray = np.asarray(to_gray(np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1)))
    cfg = LbpConfig(dilation=args.dilation)
    if args.mode == "exact":
        codes = lbp_exact(gray, cfg)
    else:
        codes = np.clip(np.rint(lbp_surrogate(gray, cfg) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(codes, mode="L").save(args.out, format="PNG")
    print(f"wrote {args.out} ({codes.shape[1]}x{codes.shape[0]})")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.ckpt, host=args.host, port=args.port, static_dir=args.static_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texinpaint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="progressive training")
    p.add_argument("--data", required=True, help="image directory or synthetic[:N[:SEED]]")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--config", help="TrainConfig as JSON or TOML")
    p.add_argument("--stages", help="comma-separated stage list, e.g. 32,64")
    p.add_argument("--steps", help="comma-separated steps per stage")
    p.add_argument("--epochs", type=int, help="epochs for every stage")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--blind", action="store_true", help="train without the mask channel")
    p.add_argument("--no-texture-loss", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="inpaint one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--pyramid", help="directory for the intermediate stage outputs")
    p.add_argument("--raw", action="store_true", help="skip compositing known pixels")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="per-bin metrics over a dataset")
    p.add_argument("--ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--bins", default="all")
    p.add_argument("--out", required=True, help="report path (.json or .csv)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="inference latency and cost row")
    p.add_argument("--ckpt")
    p.add_argument("--iters", type=int, default=100)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("maskgen", help="generate hole masks")
    p.add_argument("--bin", default="30-40", choices=sorted(masks.BIN_EDGES))
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--kind", default="freeform", choices=("freeform", "block", "outpaint"))
    p.set_defaults(func=cmd_maskgen)

    p = sub.add_parser("lbp", help="LBP code image of a picture")
    p.add_argument("--input", required=True)
    p.add_argument("--dilation", type=int, default=1)
    p.add_argument("--mode", default="exact", choices=("exact", "surrogate"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lbp)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpt")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static-dir", help="directory with the editor frontend")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
