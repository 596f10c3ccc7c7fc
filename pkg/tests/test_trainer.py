import json
import math

import numpy as np
import pytest
import torch

from texinpaint.data import ArrayDataset, ImageFolder, ingest, synthetic_texture_family, synthetic_textures
from texinpaint.losses import LossWeights
from texinpaint.trainer import LOG_COLUMNS, ProgressiveTrainer, TrainConfig, load_pyramid, read_manifest


def tiny_config(**overrides):
    kw = dict(
        stages=(32, 64),
        steps_per_stage={32: 4, 64: 4},
        batch_size=2,
        seed=0,
    )
    kw.update(overrides)
    return TrainConfig(**kw)


def tiny_dataset(n=6, seed=0):
    return synthetic_texture_family(n, size=256, seed=seed)


def state_clone(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def states_equal(a, b):
    return all(torch.equal(a[k], b[k]) for k in a) and a.keys() == b.keys()


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(stages=(64, 32))
    with pytest.raises(ValueError):
        TrainConfig(stages=(64,))
    with pytest.raises(ValueError):
        TrainConfig(lr_g=0.0)
    with pytest.raises(ValueError):
        TrainConfig(mask_kind="vertical")
    with pytest.raises(ValueError):
        TrainConfig(mask_bins=("5-10",))


def test_config_roundtrip_and_hash(tmp_path):
    cfg = TrainConfig(
        stages=(32, 64),
        epochs_per_stage={32: 2, 64: 1},
        steps_per_stage={32: 10, 64: 5},
        loss_weights=LossWeights(adv=0.2, rec=1.0, texture=5.0),
        mask_bins=("20-30",),
        seed=3,
    )
    back = TrainConfig.from_dict(cfg.to_dict())
    assert back == cfg
    assert back.hash() == cfg.hash()

    json_path = tmp_path / "cfg.json"
    json_path.write_text(json.dumps(cfg.to_dict()))
    assert TrainConfig.from_file(json_path) == cfg

    toml_path = tmp_path / "cfg.toml"
    toml_path.write_text(
        'stages = [32, 64]\nbatch_size = 4\nseed = 3\nmask_kind = "block"\n'
    )
    from_toml = TrainConfig.from_file(toml_path)
    assert from_toml.stages == (32, 64)
    assert from_toml.batch_size == 4
    assert from_toml.mask_kind == "block"

    assert TrainConfig(seed=1).hash() != TrainConfig(seed=2).hash()


def test_config_schedules():
    cfg = TrainConfig(epochs_per_stage=2, batch_size=4)
    assert cfg.steps_for(32, 10) == 2 * 3  # ceil(10/4) = 3 per epoch
    cfg2 = TrainConfig(steps_per_stage={32: 7, 64: 1, 128: 1, 256: 1})
    assert cfg2.steps_for(32, 10) == 7


# ---------------------------------------------------------------- ingestion


def test_ingest_empty_and_mixed_dir(tmp_path, caplog):
    import logging

    empty = tmp_path / "empty"
    empty.mkdir()
    with caplog.at_level(logging.WARNING):
        handle = ingest(empty)
    assert len(handle) == 0
    assert any("no images" in r.message for r in caplog.records)

    mixed = tmp_path / "mixed"
    (mixed / "sub").mkdir(parents=True)
    from PIL import Image

    rng = np.random.default_rng(0)
    for i, name in enumerate(["a.png", "sub/b.jpg", "c.png"]):
        arr = rng.integers(0, 255, size=(40, 50, 3), dtype=np.uint8)
        Image.fromarray(arr).save(mixed / name)
    (mixed / "notes.txt").write_text("not an image")
    with caplog.at_level(logging.INFO):
        handle = ingest(mixed, resolution=64)
    assert len(handle) == 3
    assert any("skipping non-image" in r.message for r in caplog.records)
    item = handle[0]
    assert item.shape == (3, 64, 64)
    assert item.min() >= -1.0 and item.max() <= 1.0


def test_ingest_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest(tmp_path / "nope")


def test_array_dataset_validation():
    with pytest.raises(ValueError):
        ArrayDataset(torch.zeros(4, 1, 8, 8))
    ds = synthetic_textures(3, size=64, seed=1)
    assert len(ds) == 3
    assert ds[0].shape == (3, 64, 64)
    # deterministic for a fixed seed
    again = synthetic_textures(3, size=64, seed=1)
    assert torch.equal(ds[2], again[2])


# ---------------------------------------------------------------- training


def test_stage_order_enforced():
    trainer = ProgressiveTrainer(tiny_config(), tiny_dataset())
    with pytest.raises(RuntimeError, match="stage order"):
        trainer.train_stage(64)
    trainer.train_stage(32)
    with pytest.raises(RuntimeError, match="stage order"):
        trainer.train_stage(32)


def test_freezing_lower_stage_bit_identical():
    trainer = ProgressiveTrainer(tiny_config(steps_per_stage={32: 3, 64: 6}), tiny_dataset())
    trainer.train_stage(32)
    g32 = state_clone(trainer.pyramid.generator(32))
    d32 = state_clone(trainer.discriminators["32"])
    trainer.train_stage(64)
    assert states_equal(g32, state_clone(trainer.pyramid.generator(32)))
    assert states_equal(d32, state_clone(trainer.discriminators["32"]))
    # and stage 64 actually moved
    assert trainer.global_step == 9


def test_one_l1_step_descends():
    # pure reconstruction, tiny lr, fixed batch: a single G step must not increase L1
    cfg = tiny_config(
        stages=(32,),
        steps_per_stage={32: 1},
        lr_g=1e-5,
        lr_d=1e-5,
        loss_weights=LossWeights(adv=0.0, rec=1.0, texture=0.0),
        batch_size=4,
    )
    ds = tiny_dataset(4)
    trainer = ProgressiveTrainer(cfg, ds)
    trainer.begin_stage(32)
    images = torch.stack([ds[i] for i in range(4)])
    masks = trainer.sample_masks(4, 256, 256)

    import torch.nn.functional as F
    from texinpaint.losses import l1_loss

    def batch_l1():
        with torch.no_grad():
            out = trainer.pyramid(images * masks, masks, stage=32)[32]
            real = F.interpolate(images, (32, 32), mode="area")
            return float(l1_loss(out, real))

    before = batch_l1()
    trainer.train_step(32, images, masks)
    after = batch_l1()
    assert after < before


def test_convergence_smoke_200_steps():
    """Desk-scale convergence: running-mean reconstruction halves in 200 steps."""
    cfg = TrainConfig(
        stages=(32,), steps_per_stage={32: 200}, batch_size=8, seed=0, lr_g=5e-4, lr_d=5e-4
    )
    trainer = ProgressiveTrainer(cfg, synthetic_texture_family(64, size=256, seed=1))
    trainer.train_stage(32)
    recs = np.array([r["l_rec"] for r in trainer.log_rows])
    first10 = recs[:10].mean()
    trailing = recs[-50:].mean()
    assert trailing <= 0.5 * first10


def test_nonfinite_loss_aborts():
    cfg = tiny_config(stages=(32,), steps_per_stage={32: 1})
    ds = tiny_dataset(2)
    trainer = ProgressiveTrainer(cfg, ds)
    trainer.begin_stage(32)
    bad = torch.full((2, 3, 256, 256), float("nan"))
    with pytest.raises(RuntimeError, match="non-finite"):
        trainer.train_step(32, bad)


def test_blind_mode_drops_mask_channel():
    cfg = tiny_config(stages=(32,), steps_per_stage={32: 2}, blind=True)
    trainer = ProgressiveTrainer(cfg, tiny_dataset(4))
    first_conv = trainer.pyramid.generator(32).branches[0][0]
    assert first_conv.in_channels == 3
    trainer.train_stage(32)  # trains end to end without the mask channel


def test_outpaint_and_block_mask_kinds():
    for kind in ("block", "outpaint"):
        cfg = tiny_config(stages=(32,), steps_per_stage={32: 2}, mask_kind=kind)
        trainer = ProgressiveTrainer(cfg, tiny_dataset(4))
        trainer.train_stage(32)
        assert len(trainer.log_rows) == 2


def test_loss_log_csv(tmp_path):
    cfg = tiny_config(stages=(32,), steps_per_stage={32: 3})
    trainer = ProgressiveTrainer(cfg, tiny_dataset(4))
    trainer.train_stage(32)
    path = tmp_path / "loss.csv"
    trainer.write_loss_log(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "32"
    assert first[5] == ""  # no texture term below stage 256


def test_early_stop_on_val_plateau():
    # near-zero learning rate: validation PSNR cannot improve, so the stage
    # ends after `patience` stale epoch-boundary evaluations
    cfg = TrainConfig(
        stages=(32,),
        epochs_per_stage=30,
        batch_size=2,
        seed=0,
        lr_g=1e-7,
        lr_d=1e-7,
        early_stop_patience=1,
    )
    ds = tiny_dataset(4)
    trainer = ProgressiveTrainer(cfg, ds, val_dataset=tiny_dataset(2, seed=9))
    trainer.train_stage(32)
    assert trainer.completed_stages == [32]
    assert len(trainer.log_rows) < cfg.steps_for(32, len(ds))


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_and_resume_exactness(tmp_path):
    ds = tiny_dataset(6)
    cfg = tiny_config(stages=(32,), steps_per_stage={32: 8})

    # uninterrupted reference run
    ref = ProgressiveTrainer(cfg, ds)
    ref.train_stage(32)
    ref_state = state_clone(ref.pyramid)

    # same run interrupted after 4 steps, checkpointed mid-stage
    run = ProgressiveTrainer(cfg, ds)
    run.begin_stage(32)
    for _ in range(4):
        run.train_step(32, run._next_batch())
    ckpt = tmp_path / "mid.ckpt"
    run.save_checkpoint(ckpt)

    resumed = ProgressiveTrainer.resume(ckpt, ds)
    resumed.train_stage(32)
    assert resumed.global_step == 8
    res_state = state_clone(resumed.pyramid)
    assert states_equal(ref_state, res_state)
    # loss curves line up too
    ref_recs = [r["l_rec"] for r in ref.log_rows]
    res_recs = [r["l_rec"] for r in resumed.log_rows]
    assert ref_recs == pytest.approx(res_recs)


def test_checkpoint_config_hash_guard(tmp_path):
    ds = tiny_dataset(4)
    trainer = ProgressiveTrainer(tiny_config(stages=(32,), steps_per_stage={32: 1}), ds)
    trainer.train_stage(32)
    ckpt = trainer.save_checkpoint(tmp_path / "c.ckpt")
    other = tiny_config(stages=(32,), steps_per_stage={32: 1}, seed=99)
    with pytest.raises(RuntimeError, match="config hash"):
        ProgressiveTrainer.resume(ckpt, ds, config=other)


def test_checkpoint_manifest_and_load_pyramid(tmp_path):
    ds = tiny_dataset(4)
    cfg = tiny_config(stages=(32,), steps_per_stage={32: 2})
    trainer = ProgressiveTrainer(cfg, ds)
    trainer.train_stage(32)
    ckpt = trainer.save_checkpoint(tmp_path / "c.ckpt")

    manifest = read_manifest(ckpt)
    assert manifest["config_hash"] == cfg.hash()
    assert manifest["completed_stages"] == [32]
    json.dumps(manifest)  # JSON-able end to end

    pyramid, mf = load_pyramid(ckpt)
    assert mf["config_hash"] == cfg.hash()
    for key, val in trainer.pyramid.state_dict().items():
        assert torch.equal(val, pyramid.state_dict()[key])
    # save-after-load keeps weights identical
    trainer2 = ProgressiveTrainer.resume(ckpt, ds)
    ckpt2 = trainer2.save_checkpoint(tmp_path / "c2.ckpt")
    pyramid2, _ = load_pyramid(ckpt2)
    for key, val in pyramid.state_dict().items():
        assert torch.equal(val, pyramid2.state_dict()[key])


# ---------------------------------------------------------------- optimizer


def test_adam_matches_reference_oracle():
    # 1-D quadratic: f(x) = (x - 3)^2, shipped hyper-parameters, 100 steps
    lr, b1, b2, eps = 1e-4, 0.5, 0.99, 1e-8
    x = torch.zeros(1, dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([x], lr=lr, betas=(b1, b2), eps=eps)
    torch_traj = []
    for _ in range(100):
        opt.zero_grad()
        loss = (x - 3.0) ** 2
        loss.backward()
        opt.step()
        torch_traj.append(float(x.detach()))

    theta, m, v = 0.0, 0.0, 0.0
    oracle_traj = []
    for t in range(1, 101):
        grad = 2.0 * (theta - 3.0)
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        oracle_traj.append(theta)

    for a, b in zip(torch_traj, oracle_traj):
        assert a == pytest.approx(b, abs=1e-10)
