"""Progressive freeze-and-grow training of the generator stack.

One stage at a time, ascending resolution: the current generator and its
PatchGAN discriminator take alternating least-squares GAN steps while every
other stage stays frozen (bit-identical weights). Checkpoints capture enough
state (weights, optimizers, cursors, RNG) that a resumed run reproduces an
uninterrupted one exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .losses import (
    TEXTURE_STAGE,
    LossWeights,
    StageLosses,
    TextureLoss,
    l1_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    overall_loss,
)
from .masks import BIN_EDGES, gen_block, gen_freeform, gen_outpaint
from .nets import STAGES, GeneratorPyramid, build_discriminator, init_weights, pyramid_manifest

log = logging.getLogger(__name__)

CKPT_VERSION = 1
LOG_COLUMNS = ("step", "stage", "l_rec", "l_adv", "l_dis", "l_texture")
MASK_KINDS = ("freeform", "block", "outpaint")


@dataclass
class TrainConfig:
    """Hyper-parameters and schedule.

    Defaults are desk-scale (batch 8, synthetic-size corpora); the full-scale
    settings (batch 32) remain a config change. ``steps_per_stage`` overrides
    the epoch schedule when set, which is what the smoke tests use.
    """

    stages: tuple[int, ...] = STAGES
    epochs_per_stage: object = 1  # int, or {stage: epochs}
    steps_per_stage: Optional[dict] = None
    batch_size: int = 8
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.99
    loss_weights: LossWeights = LossWeights()
    use_texture_loss: bool = True
    lbp_dilation: int = 1
    mask_kind: str = "freeform"
    mask_bins: tuple[str, ...] = tuple(BIN_EDGES)
    blind: bool = False
    seed: int = 0
    early_stop_patience: Optional[int] = None

    def __post_init__(self):
        self.stages = tuple(int(s) for s in self.stages)
        if self.stages != STAGES[: len(self.stages)] or not self.stages:
            raise ValueError(f"stages must be an ascending prefix of {STAGES}, got {self.stages}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mask_kind not in MASK_KINDS:
            raise ValueError(f"mask_kind must be one of {MASK_KINDS}")
        self.mask_bins = tuple(self.mask_bins)
        for b in self.mask_bins:
            if b not in BIN_EDGES:
                raise ValueError(f"unknown mask bin {b!r}")
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)

    def epochs_for(self, stage: int) -> int:
        if isinstance(self.epochs_per_stage, dict):
            return int(self.epochs_per_stage.get(stage, 1))
        return int(self.epochs_per_stage)

    def steps_for(self, stage: int, n_items: int) -> int:
        if self.steps_per_stage is not None:
            return int(self.steps_per_stage[stage])
        steps_per_epoch = max(1, math.ceil(n_items / self.batch_size))
        return self.epochs_for(stage) * steps_per_epoch

    def to_dict(self) -> dict:
        d = {
            "stages": list(self.stages),
            "batch_size": self.batch_size,
            "lr_g": self.lr_g,
            "lr_d": self.lr_d,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "loss_weights": {
                "adv": self.loss_weights.adv,
                "rec": self.loss_weights.rec,
                "texture": self.loss_weights.texture,
            },
            "use_texture_loss": self.use_texture_loss,
            "lbp_dilation": self.lbp_dilation,
            "mask_kind": self.mask_kind,
            "mask_bins": list(self.mask_bins),
            "blind": self.blind,
            "seed": self.seed,
            "early_stop_patience": self.early_stop_patience,
        }
        if isinstance(self.epochs_per_stage, dict):
            d["epochs_per_stage"] = {str(k): int(v) for k, v in self.epochs_per_stage.items()}
        else:
            d["epochs_per_stage"] = int(self.epochs_per_stage)
        if self.steps_per_stage is not None:
            d["steps_per_stage"] = {str(k): int(v) for k, v in self.steps_per_stage.items()}
        else:
            d["steps_per_stage"] = None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if isinstance(data.get("epochs_per_stage"), dict):
            data["epochs_per_stage"] = {int(k): int(v) for k, v in data["epochs_per_stage"].items()}
        if isinstance(data.get("steps_per_stage"), dict):
            data["steps_per_stage"] = {int(k): int(v) for k, v in data["steps_per_stage"].items()}
        if isinstance(data.get("loss_weights"), dict):
            data["loss_weights"] = LossWeights(**data["loss_weights"])
        if "stages" in data:
            data["stages"] = tuple(data["stages"])
        if "mask_bins" in data:
            data["mask_bins"] = tuple(data["mask_bins"])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        path = Path(path)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:  # Python 3.10
                import tomli as tomllib
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


class ProgressiveTrainer:
    """Owns the pyramid, the discriminators and the training cursor."""

    def __init__(self, config: TrainConfig, dataset, val_dataset=None, out_dir=None):
        self.config = config
        self.dataset = dataset
        self.val_dataset = val_dataset
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(config.seed)
        self.pyramid = GeneratorPyramid(config.stages, blind=config.blind)
        self.discriminators = nn.ModuleDict(
            {str(n): build_discriminator(n) for n in config.stages}
        )
        init_gen = torch.Generator().manual_seed(config.seed)
        init_weights(self.pyramid, generator=init_gen)
        init_weights(self.discriminators, generator=init_gen)

        self._texture = TextureLoss(config.lbp_dilation) if config.use_texture_loss else None
        self.rng = np.random.default_rng(config.seed + 1)
        self.completed_stages: list[int] = []
        self.global_step = 0
        self.log_rows: list[dict] = []

        self._current_stage: Optional[int] = None
        self._stage_step = 0
        self._epoch = 0
        self._epoch_order: Optional[list[int]] = None
        self._epoch_pos = 0
        self._g_opt: Optional[torch.optim.Adam] = None
        self._d_opt: Optional[torch.optim.Adam] = None

    # ------------------------------------------------------------------ stages

    def _configure_stage(self, stage: int) -> None:
        for s in self.config.stages:
            current = s == stage
            g = self.pyramid.generator(s)
            g.requires_grad_(current)
            g.train(current)
            d = self.discriminators[str(s)]
            d.requires_grad_(current)
            d.train(current)
        betas = (self.config.adam_beta1, self.config.adam_beta2)
        self._g_opt = torch.optim.Adam(
            self.pyramid.generator(stage).parameters(), lr=self.config.lr_g, betas=betas
        )
        self._d_opt = torch.optim.Adam(
            self.discriminators[str(stage)].parameters(), lr=self.config.lr_d, betas=betas
        )

    def begin_stage(self, stage: int) -> None:
        """Validate the stage order and point the cursor at ``stage``.

        No-op when the stage is already active (the resume path configures it)."""
        expected_idx = len(self.completed_stages)
        if expected_idx >= len(self.config.stages):
            raise RuntimeError("all configured stages are already trained")
        expected = self.config.stages[expected_idx]
        if stage != expected:
            raise RuntimeError(
                f"stage order violation: expected stage {expected} next, got {stage} "
                f"(completed: {self.completed_stages})"
            )
        if self._current_stage != stage:
            self._current_stage = stage
            self._stage_step = 0
            self._epoch = 0
            self._epoch_order = None
            self._epoch_pos = 0
            self._configure_stage(stage)

    def train_stage(self, stage: int, max_steps: Optional[int] = None) -> dict:
        """Train one stage to its step budget; lower stages must be done."""
        self.begin_stage(stage)
        target = max_steps if max_steps is not None else self.config.steps_for(stage, len(self.dataset))
        patience = self.config.early_stop_patience
        best_val, stale = -math.inf, 0
        log.info("stage %d: %d steps (from step %d)", stage, target, self._stage_step)

        while self._stage_step < target:
            epoch_before = self._epoch
            images = self._next_batch()
            self.train_step(stage, images)
            if (
                patience is not None
                and self.val_dataset is not None
                and self._epoch != epoch_before
                and self._stage_step > 1
            ):
                score = self._validation_psnr(stage)
                if score > best_val + 1e-3:
                    best_val, stale = score, 0
                else:
                    stale += 1
                    if stale >= patience:
                        log.info("stage %d: early stop at step %d (val PSNR plateau)", stage, self._stage_step)
                        break

        self.completed_stages.append(stage)
        self._current_stage = None
        self._stage_step = 0
        self._epoch = 0
        self._epoch_order = None
        self._epoch_pos = 0
        self._g_opt = self._d_opt = None
        # stage is done: freeze it for all later stages
        self.pyramid.generator(stage).requires_grad_(False)
        self.pyramid.generator(stage).eval()
        self.discriminators[str(stage)].requires_grad_(False)
        self.discriminators[str(stage)].eval()
        return {"stage": stage, "steps": target, "global_step": self.global_step}

    def train_all(self) -> Optional[Path]:
        """Run the remaining stages in order; returns the final checkpoint path."""
        for stage in self.config.stages[len(self.completed_stages) :]:
            self.train_stage(stage)
            if self.out_dir is not None:
                self.save_checkpoint(self.out_dir / f"stage{stage}.ckpt")
        if self.out_dir is not None:
            final = self.out_dir / "final.ckpt"
            self.save_checkpoint(final)
            self.write_loss_log(self.out_dir / "loss_log.csv")
            return final
        return None

    # ------------------------------------------------------------------ batches

    def _next_batch(self) -> torch.Tensor:
        n = len(self.dataset)
        if n == 0:
            raise RuntimeError("dataset is empty")
        if self._epoch_order is None or self._epoch_pos >= n:
            self._epoch_order = [int(i) for i in self.rng.permutation(n)]
            self._epoch_pos = 0
            self._epoch += 1
        take = min(self.config.batch_size, n - self._epoch_pos)
        idx = self._epoch_order[self._epoch_pos : self._epoch_pos + take]
        self._epoch_pos += take
        images = torch.stack([self.dataset[i] for i in idx])
        if getattr(self.dataset, "hflip", False):
            flips = self.rng.random(len(idx)) < 0.5
            for j, flip in enumerate(flips):
                if flip:
                    images[j] = torch.flip(images[j], dims=[-1])
        return images

    def sample_masks(self, batch: int, h: int, w: int) -> torch.Tensor:
        """Per-item training masks from the trainer's seeded stream."""
        cfg = self.config
        masks = []
        for _ in range(batch):
            if cfg.mask_kind == "freeform":
                bin_name = cfg.mask_bins[int(self.rng.integers(0, len(cfg.mask_bins)))]
                m = gen_freeform(h, w, bin_name, seed=self.rng)
            elif cfg.mask_kind == "block":
                m = gen_block(h, w, seed=self.rng)
            else:
                m = gen_outpaint(h, w)
            masks.append(torch.from_numpy(m))
        return torch.stack(masks).unsqueeze(1)

    # ------------------------------------------------------------------ steps

    def train_step(self, stage: int, images: torch.Tensor, masks: Optional[torch.Tensor] = None) -> dict:
        """One alternating D/G update on a batch; returns the logged loss row."""
        cfg = self.config
        if masks is None:
            masks = self.sample_masks(images.shape[0], images.shape[-2], images.shape[-1])
        corrupted = images * masks
        outputs = self.pyramid(corrupted, masks, stage=stage, train_stage=stage)
        out = outputs[stage]
        real = (
            images
            if images.shape[-1] == stage
            else F.interpolate(images, (stage, stage), mode="area")
        )
        disc = self.discriminators[str(stage)]

        l_dis = lsgan_d_loss(disc(real), disc(out.detach()))
        self._d_opt.zero_grad(set_to_none=True)
        l_dis.backward()
        self._d_opt.step()

        l_adv = lsgan_g_loss(disc(out))
        l_rec = l1_loss(out, real)
        l_tex = None
        if stage == TEXTURE_STAGE and self._texture is not None:
            l_tex = self._texture(out, real)
        total = overall_loss(
            stage, StageLosses(rec=l_rec, adv=l_adv, dis=l_dis, texture=l_tex), cfg.loss_weights
        )
        if not torch.isfinite(total) or not torch.isfinite(l_dis):
            raise RuntimeError(
                f"non-finite loss at step {self.global_step} (stage {stage}): "
                f"rec={float(l_rec.detach())} adv={float(l_adv.detach())} "
                f"dis={float(l_dis.detach())} "
                f"texture={None if l_tex is None else float(l_tex.detach())}"
            )
        self._g_opt.zero_grad(set_to_none=True)
        total.backward()
        self._g_opt.step()

        row = {
            "step": self.global_step,
            "stage": stage,
            "l_rec": float(l_rec.detach()),
            "l_adv": float(l_adv.detach()),
            "l_dis": float(l_dis.detach()),
            "l_texture": float(l_tex.detach()) if l_tex is not None else None,
        }
        self.log_rows.append(row)
        self.global_step += 1
        self._stage_step += 1
        return row

    def _validation_psnr(self, stage: int, limit: int = 8) -> float:
        from .metrics import psnr  # local import to avoid a cycle

        scores = []
        with torch.no_grad():
            for i in range(min(limit, len(self.val_dataset))):
                img = self.val_dataset[i].unsqueeze(0)
                m = gen_freeform(img.shape[-2], img.shape[-1], "30-40", seed=1000 + i)
                mask = torch.from_numpy(m).view(1, 1, *m.shape)
                out = self.pyramid(img * mask, mask, stage=stage, train_stage=None)[stage]
                real = F.interpolate(img, (stage, stage), mode="area")
                scores.append(psnr(((out[0] + 1) / 2).clamp(0, 1).numpy(), ((real[0] + 1) / 2).numpy()))
        return float(np.mean(scores))

    # ------------------------------------------------------------------ logging

    def write_loss_log(self, path) -> None:
        """Loss curves as CSV: one row per step, empty texture column below 256."""
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for row in self.log_rows:
                out = dict(row)
                if out.get("l_texture") is None:
                    out["l_texture"] = ""
                writer.writerow(out)

    # -------------------------------------------------------------- checkpoints

    def save_checkpoint(self, path) -> Path:
        """Atomic checkpoint write (temp file + rename)."""
        path = Path(path)
        state = {
            "version": CKPT_VERSION,
            "manifest": {
                "version": CKPT_VERSION,
                "config_hash": self.config.hash(),
                "completed_stages": list(self.completed_stages),
                "current_stage": self._current_stage,
                "global_step": self.global_step,
                "networks": pyramid_manifest(self.pyramid),
                "torch_version": str(torch.__version__),
            },
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "generators": self.pyramid.state_dict(),
            "discriminators": self.discriminators.state_dict(),
            "g_opt": self._g_opt.state_dict() if self._g_opt is not None else None,
            "d_opt": self._d_opt.state_dict() if self._d_opt is not None else None,
            "cursor": {
                "completed_stages": list(self.completed_stages),
                "current_stage": self._current_stage,
                "stage_step": self._stage_step,
                "epoch": self._epoch,
                "epoch_order": self._epoch_order,
                "epoch_pos": self._epoch_pos,
                "global_step": self.global_step,
            },
            "rng": {"numpy": self.rng.bit_generator.state, "torch": torch.get_rng_state()},
            "log_rows": self.log_rows,
        }
        tmp = path.with_name(path.name + ".tmp")
        torch.save(state, tmp)
        os.replace(tmp, path)
        return path

    @classmethod
    def resume(cls, path, dataset, val_dataset=None, out_dir=None, config: Optional[TrainConfig] = None):
        """Rebuild a trainer from a checkpoint; continues exactly where it stopped."""
        state = torch.load(path, map_location="cpu", weights_only=True)
        if state.get("version") != CKPT_VERSION:
            raise RuntimeError(f"unsupported checkpoint version {state.get('version')}")
        saved_config = TrainConfig.from_dict(state["config"])
        if config is not None and config.hash() != state["config_hash"]:
            raise RuntimeError("config hash mismatch: refusing to resume with a different config")
        trainer = cls(saved_config, dataset, val_dataset=val_dataset, out_dir=out_dir)
        trainer.pyramid.load_state_dict(state["generators"])
        trainer.discriminators.load_state_dict(state["discriminators"])
        cursor = state["cursor"]
        trainer.completed_stages = list(cursor["completed_stages"])
        trainer.global_step = cursor["global_step"]
        trainer.log_rows = list(state["log_rows"])
        trainer.rng = np.random.default_rng()
        trainer.rng.bit_generator.state = state["rng"]["numpy"]
        torch.set_rng_state(state["rng"]["torch"])
        for s in trainer.completed_stages:
            trainer.pyramid.generator(s).requires_grad_(False)
            trainer.pyramid.generator(s).eval()
            trainer.discriminators[str(s)].requires_grad_(False)
            trainer.discriminators[str(s)].eval()
        if cursor["current_stage"] is not None:
            stage = cursor["current_stage"]
            trainer._configure_stage(stage)
            trainer._current_stage = stage
            trainer._stage_step = cursor["stage_step"]
            trainer._epoch = cursor["epoch"]
            trainer._epoch_order = cursor["epoch_order"]
            trainer._epoch_pos = cursor["epoch_pos"]
            if state["g_opt"] is not None:
                trainer._g_opt.load_state_dict(state["g_opt"])
            if state["d_opt"] is not None:
                trainer._d_opt.load_state_dict(state["d_opt"])
        return trainer


def read_manifest(path) -> dict:
    """The embedded JSON-able manifest of a checkpoint, without the weights."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    return state["manifest"]


def load_pyramid(path) -> tuple[GeneratorPyramid, dict]:
    """Inference-side loader: the generator stack plus the manifest."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    config = TrainConfig.from_dict(state["config"])
    pyramid = GeneratorPyramid(config.stages, blind=config.blind)
    pyramid.load_state_dict(state["generators"])
    pyramid.eval()
    pyramid.requires_grad_(False)
    return pyramid, state["manifest"]
