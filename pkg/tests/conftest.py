import numpy as np
import pytest
import torch

from texinpaint.data import synthetic_texture_family
from texinpaint.trainer import ProgressiveTrainer, TrainConfig


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A minimally trained full-stack checkpoint shared across test modules."""
    out = tmp_path_factory.mktemp("ckpt")
    cfg = TrainConfig(
        stages=(32, 64, 128, 256),
        steps_per_stage={32: 2, 64: 2, 128: 1, 256: 1},
        batch_size=1,
        seed=0,
    )
    trainer = ProgressiveTrainer(cfg, synthetic_texture_family(2, size=256, seed=0))
    trainer.train_all()
    return trainer.save_checkpoint(out / "tiny.ckpt")
