import json

import numpy as np
import pytest
import torch

from texinpaint.nets import (
    STAGES,
    BranchSpec,
    GeneratorPyramid,
    GeneratorSpec,
    LayerSpec,
    build_discriminator,
    build_generator,
    composite,
    conv,
    count_efficiency,
    discriminator_spec,
    generator_spec,
    init_weights,
    pyramid_manifest,
)


def small_pyramid(seed=0):
    p = GeneratorPyramid()
    init_weights(p, generator=torch.Generator().manual_seed(seed))
    return p


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec("conv", 3, 8, kernel=5)
    with pytest.raises(ValueError):
        LayerSpec("conv", 3, 8, kernel=3, stride=3)
    with pytest.raises(ValueError):
        LayerSpec("conv", 3, 8, kernel=3, padding=0)
    with pytest.raises(ValueError):
        LayerSpec("conv", 3, 8, kernel=3, spectral_norm=True, bias=True)
    with pytest.raises(ValueError):
        LayerSpec("pool", 3, 8, kernel=3)


def test_layer_shape_arithmetic():
    down = LayerSpec("conv", 3, 8, kernel=4, stride=2)
    assert down.out_size(256) == 128
    keep = LayerSpec("conv", 3, 8, kernel=3, stride=1)
    assert keep.out_size(256) == 256
    patch = LayerSpec("conv", 3, 1, kernel=4, stride=1)
    assert patch.out_size(32) == 31
    up = LayerSpec("transposed_conv", 8, 4, kernel=4, stride=2)
    assert up.out_size(16) == 32


@pytest.mark.parametrize(
    "resolution,score_size", [(32, 3), (64, 7), (128, 15), (256, 31)]
)
def test_discriminator_output_shapes(resolution, score_size):
    d = build_discriminator(resolution)
    out = d(torch.randn(2, 3, resolution, resolution))
    assert out.shape == (2, 1, score_size, score_size)


def test_discriminator_widths_and_bias():
    spec = discriminator_spec(256)
    assert [l.out_ch for l in spec.layers] == [28, 56, 112, 1]
    assert spec.layers[0].param_count() == 1344  # k^2 * 3 * 28, no bias
    assert all(not l.bias and l.spectral_norm for l in spec.layers)
    spec32 = discriminator_spec(32)
    assert [l.out_ch for l in spec32.layers] == [24, 48, 96, 1]
    # final layer has no activation
    assert spec.layers[-1].activation == "none"


def test_discriminator_unsupported_resolution():
    with pytest.raises(ValueError):
        build_discriminator(48)


def test_discriminator_spectral_norm_bound():
    torch.manual_seed(0)
    d = build_discriminator(32)
    init_weights(d, generator=torch.Generator().manual_seed(0))
    x = torch.randn(2, 3, 32, 32)
    for _ in range(100):  # power iteration warm-up
        d(x)
    for m in d.modules():
        if hasattr(m, "weight_orig"):
            w = m.weight.detach().reshape(m.weight.shape[0], -1)
            sigma = torch.linalg.svdvals(w)[0].item()
            assert sigma <= 1.0 + 1e-3


def test_generator_block_counts():
    for n, blocks in [(32, 1), (64, 3), (128, 4), (256, 5)]:
        assert len(generator_spec(n).branches) == blocks


def test_generator_32_shapes():
    g = build_generator(generator_spec(32))
    out = g(torch.randn(2, 4, 32, 32))
    assert out.shape == (2, 3, 32, 32)


def test_generator_64_branch_shapes():
    g = build_generator(generator_spec(64))
    feats = g.branch_outputs(torch.randn(1, 4, 64, 64), {32: torch.randn(1, 3, 32, 32)})
    assert [tuple(f.shape) for f in feats] == [(1, 48, 16, 16), (1, 48, 16, 16)]
    assert g.spec.branches[-1].layers[0].in_ch == 96
    out = g(torch.randn(1, 4, 64, 64), {32: torch.randn(1, 3, 32, 32)})
    assert out.shape == (1, 3, 64, 64)


def test_generator_128_branch_shapes():
    g = build_generator(generator_spec(128))
    priors = {32: torch.randn(1, 3, 32, 32), 64: torch.randn(1, 3, 64, 64)}
    feats = g.branch_outputs(torch.randn(1, 4, 128, 128), priors)
    assert all(tuple(f.shape) == (1, 56, 32, 32) for f in feats)
    assert g.spec.branches[-1].layers[0].in_ch == 168
    assert g(torch.randn(1, 4, 128, 128), priors).shape == (1, 3, 128, 128)


def test_generator_256_branch_shapes():
    g = build_generator(generator_spec(256))
    priors = {
        32: torch.randn(1, 3, 32, 32),
        64: torch.randn(1, 3, 64, 64),
        128: torch.randn(1, 3, 128, 128),
    }
    feats = g.branch_outputs(torch.randn(1, 4, 256, 256), priors)
    # four 56-channel branch outputs at the 64x64 working size (coarsest prior upsampled)
    assert all(tuple(f.shape) == (1, 56, 64, 64) for f in feats)
    assert g.spec.branches[-1].layers[0].in_ch == 224
    assert g(torch.randn(1, 4, 256, 256), priors).shape == (1, 3, 256, 256)


def test_generator_blind_input_width():
    for n in STAGES:
        spec = generator_spec(n, blind=True)
        assert spec.branches[0].layers[0].in_ch == 3
    g = build_generator(generator_spec(32, blind=True))
    assert g(torch.randn(1, 3, 32, 32)).shape == (1, 3, 32, 32)


def test_generator_missing_prior_raises():
    g = build_generator(generator_spec(64))
    with pytest.raises(ValueError):
        g(torch.randn(1, 4, 64, 64), {})


def test_generator_wrong_input_size_raises():
    g = build_generator(generator_spec(32))
    with pytest.raises(ValueError):
        g(torch.randn(1, 4, 64, 64))


def test_spec_concat_mismatch_raises():
    good = generator_spec(64)
    # tampering with the second branch's final stride breaks the 16x16 alignment
    bad_branch = BranchSpec(
        good.branches[1].input_source,
        good.branches[1].layers[:-1] + (conv(48, 48, 4, 2),),
    )
    with pytest.raises(ValueError):
        GeneratorSpec(64, (good.branches[0], bad_branch, good.branches[2]))


def test_spec_manifest_roundtrip():
    spec = generator_spec(256)
    data = json.loads(json.dumps(spec.to_manifest()))
    assert GeneratorSpec.from_manifest(data) == spec


def test_pyramid_stage_subsets():
    p = small_pyramid()
    img = torch.rand(1, 3, 256, 256) * 2 - 1
    mask = torch.ones(1, 1, 256, 256)
    out32 = p(img * mask, mask, stage=32)
    assert 32 in out32 and 64 not in out32
    out128 = p(img * mask, mask, stage=128)
    assert all(n in out128 for n in (32, 64, 128)) and 256 not in out128
    full = p(img * mask, mask)
    for n in STAGES:
        assert full[n].shape == (1, 3, n, n)
        assert full[n].abs().max() <= 1.0
    assert full.final.shape[-1] == 256


def test_pyramid_deterministic_forward():
    p = small_pyramid()
    img = torch.rand(2, 3, 256, 256) * 2 - 1
    mask = (torch.rand(2, 1, 256, 256) > 0.3).float()
    a = p(img * mask, mask).final
    b = p(img * mask, mask).final
    assert torch.equal(a, b)


def test_pyramid_rejects_unknown_stage():
    p = small_pyramid()
    with pytest.raises(ValueError):
        p(torch.zeros(1, 3, 256, 256), torch.ones(1, 1, 256, 256), stage=48)


def test_composite_keeps_known_pixels():
    orig = torch.rand(1, 3, 8, 8)
    out = torch.zeros(1, 3, 8, 8)
    mask = torch.zeros(1, 1, 8, 8)
    mask[..., :4, :] = 1.0
    mixed = composite(out, orig, mask)
    assert torch.equal(mixed[..., :4, :], orig[..., :4, :])
    assert torch.equal(mixed[..., 4:, :], out[..., 4:, :])


def test_init_weights_statistics():
    g = build_generator(generator_spec(128))
    init_weights(g, generator=torch.Generator().manual_seed(1))
    biggest = max(
        (m.weight for m in g.modules() if isinstance(m, torch.nn.Conv2d)),
        key=lambda w: w.numel(),
    )
    assert biggest.numel() > 1e5
    var = biggest.var().item()
    assert 0.02**2 * 0.95 <= var <= 0.02**2 * 1.05
    for m in g.modules():
        if isinstance(m, (torch.nn.Conv2d, torch.nn.ConvTranspose2d)) and m.bias is not None:
            assert (m.bias == 0).all()


def test_init_weights_seeded_determinism():
    a = build_generator(generator_spec(32))
    b = build_generator(generator_spec(32))
    init_weights(a, generator=torch.Generator().manual_seed(7))
    init_weights(b, generator=torch.Generator().manual_seed(7))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    c = build_generator(generator_spec(32))
    init_weights(c, generator=torch.Generator().manual_seed(8))
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_count_single_conv_example():
    assert conv(4, 28, 3).param_count() == 1036


def test_count_totals_match_breakdown_and_modules():
    report = count_efficiency()
    assert report.total_params == sum(l.params for l in report.per_layer)
    assert report.total_mult_adds == sum(l.mult_adds for l in report.per_layer)
    assert report.total_flops == 2 * report.total_mult_adds
    p = GeneratorPyramid()
    assert report.total_params == sum(x.numel() for x in p.parameters())
    # analytic counts depend only on the specs, not on any weights
    assert count_efficiency().total_mult_adds == report.total_mult_adds


def test_count_matches_published_budget():
    report = count_efficiency()
    assert 3.0e6 * 0.85 <= report.total_params <= 3.0e6 * 1.15
    assert 9.5 * 0.85 <= report.gflops <= 9.5 * 1.15
    assert report.discriminator_params > 0
    json.loads(report.to_json())


def test_pyramid_manifest_shape():
    p = GeneratorPyramid()
    m = pyramid_manifest(p)
    assert m["stages"] == [32, 64, 128, 256]
    assert len(m["generators"]) == 4
    json.dumps(m)
