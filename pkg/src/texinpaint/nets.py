"""Progressive generators, PatchGAN discriminators and cost accounting.

Networks are built from declarative layer specs so the same tables drive
both module construction and the analytic parameter / multiply-add counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import spectral_norm

STAGES = (32, 64, 128, 256)
SPEC_VERSION = 1

CORRUPTED = "corrupted"
_BLOCK_COUNTS = {32: 1, 64: 3, 128: 4, 256: 5}


def prior_source(resolution: int) -> str:
    return f"prior{resolution}"


@dataclass(frozen=True)
class LayerSpec:
    """One conv / transposed-conv layer of the shipped tables."""

    kind: str  # "conv" | "transposed_conv"
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    padding: int = 1
    activation: str = "relu"  # relu | leaky_relu (slope 0.2) | tanh | none
    spectral_norm: bool = False
    bias: bool = True

    def __post_init__(self):
        if self.kind not in ("conv", "transposed_conv"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_ch <= 0 or self.out_ch <= 0:
            raise ValueError("channel counts must be positive")
        if self.kernel not in (3, 4):
            raise ValueError(f"kernel must be 3 or 4, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.padding != 1:
            raise ValueError("all shipped layers use padding 1")
        if self.activation not in ("relu", "leaky_relu", "tanh", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.spectral_norm and self.bias:
            raise ValueError("spectral-normalized layers run without bias")

    def out_size(self, size: int) -> int:
        if self.kind == "conv":
            return (size + 2 * self.padding - self.kernel) // self.stride + 1
        return (size - 1) * self.stride - 2 * self.padding + self.kernel

    def param_count(self) -> int:
        return self.kernel**2 * self.in_ch * self.out_ch + (self.out_ch if self.bias else 0)

    def mult_adds(self, in_size: int) -> int:
        out = self.out_size(in_size)
        return self.kernel**2 * self.in_ch * self.out_ch * out * out


def conv(in_ch, out_ch, kernel=3, stride=1, activation="relu", **kw) -> LayerSpec:
    return LayerSpec("conv", in_ch, out_ch, kernel, stride, activation=activation, **kw)


def tconv(in_ch, out_ch, activation="relu") -> LayerSpec:
    # k4 s2 p1: exact x2 upsampling with no output-padding ambiguity
    return LayerSpec("transposed_conv", in_ch, out_ch, 4, 2, activation=activation)


@dataclass(frozen=True)
class BranchSpec:
    """A generator sub-network and where its input comes from.

    ``resize_input_to`` bilinearly resizes the input before the first conv;
    only the coarsest prior of the 256 generator needs it.
    """

    input_source: str
    layers: tuple[LayerSpec, ...]
    resize_input_to: Optional[int] = None


@dataclass(frozen=True)
class GeneratorSpec:
    """Blocks of one progressive generator; the last block fuses the others."""

    resolution: int
    branches: tuple[BranchSpec, ...]

    def __post_init__(self):
        if self.resolution not in STAGES:
            raise ValueError(f"resolution must be one of {STAGES}, got {self.resolution}")
        if len(self.branches) != _BLOCK_COUNTS[self.resolution]:
            raise ValueError(
                f"{self.resolution}-generator needs {_BLOCK_COUNTS[self.resolution]} blocks, "
                f"got {len(self.branches)}"
            )
        final = self.branches[-1].layers[-1]
        if final.activation != "tanh":
            raise ValueError("generator output layer must use tanh")
        size = self.working_size()  # raises on concat misalignment
        if len(self.branches) == 1:
            size = self.resolution
        for layer in self.branches[-1].layers:
            size = layer.out_size(size)
        if size != self.resolution:
            raise ValueError(
                f"output block produces {size}x{size}, expected {self.resolution}"
            )

    def branch_input_size(self, branch: BranchSpec) -> int:
        if branch.resize_input_to is not None:
            return branch.resize_input_to
        if branch.input_source == CORRUPTED:
            return self.resolution
        return int(branch.input_source.removeprefix("prior"))

    def working_size(self) -> int:
        """Common spatial size of the branch outputs fed to the fusion block."""
        if len(self.branches) == 1:
            return self.resolution // 4
        sizes = set()
        channels = 0
        for branch in self.branches[:-1]:
            size = self.branch_input_size(branch)
            for layer in branch.layers:
                size = layer.out_size(size)
            sizes.add(size)
            channels += branch.layers[-1].out_ch
        if len(sizes) != 1:
            raise ValueError(f"branch outputs disagree on spatial size: {sorted(sizes)}")
        if channels != self.branches[-1].layers[0].in_ch:
            raise ValueError(
                f"fusion block expects {self.branches[-1].layers[0].in_ch} channels, "
                f"branches provide {channels}"
            )
        return sizes.pop()

    def to_manifest(self) -> dict:
        return {
            "version": SPEC_VERSION,
            "resolution": self.resolution,
            "branches": [
                {
                    "input_source": b.input_source,
                    "resize_input_to": b.resize_input_to,
                    "layers": [vars(l).copy() for l in b.layers],
                }
                for b in self.branches
            ],
        }

    @classmethod
    def from_manifest(cls, data: dict) -> "GeneratorSpec":
        if data.get("version") != SPEC_VERSION:
            raise ValueError(f"unsupported spec version {data.get('version')}")
        branches = tuple(
            BranchSpec(
                input_source=b["input_source"],
                layers=tuple(LayerSpec(**l) for l in b["layers"]),
                resize_input_to=b.get("resize_input_to"),
            )
            for b in data["branches"]
        )
        return cls(resolution=data["resolution"], branches=branches)


def _encoder_full(in_ch: int, w: int) -> tuple[LayerSpec, ...]:
    # downsamples x4: the branch for inputs at the generator's own resolution
    return (conv(in_ch, w), conv(w, 2 * w, 4, 2), conv(2 * w, 2 * w, 4, 2))


def _encoder_half(in_ch: int, w: int) -> tuple[LayerSpec, ...]:
    # downsamples x2: for the prior one level below the generator's resolution
    return (conv(in_ch, w), conv(w, 2 * w, 4, 2), conv(2 * w, 2 * w))


def _encoder_flat(in_ch: int, w: int) -> tuple[LayerSpec, ...]:
    # keeps resolution: for priors already at the working size
    return (conv(in_ch, w), conv(w, 2 * w), conv(2 * w, 2 * w))


def _decoder(in_ch: int, w: int) -> tuple[LayerSpec, ...]:
    return (
        conv(in_ch, 4 * w),
        conv(4 * w, 4 * w),
        conv(4 * w, 4 * w),
        conv(4 * w, 4 * w),
        conv(4 * w, 4 * w),
        tconv(4 * w, 2 * w),
        tconv(2 * w, w),
        conv(w, 3, activation="tanh"),
    )


def generator_spec(resolution: int, blind: bool = False) -> GeneratorSpec:
    """The shipped generator table for one stage.

    ``blind`` drops the mask channel from the corrupted-image branch, leaving
    the rest of the network unchanged.
    """
    in0 = 3 if blind else 4
    if resolution == 32:
        layers = _encoder_full(in0, 24) + _decoder(48, 24)
        return GeneratorSpec(32, (BranchSpec(CORRUPTED, layers),))
    if resolution == 64:
        return GeneratorSpec(
            64,
            (
                BranchSpec(CORRUPTED, _encoder_full(in0, 24)),
                BranchSpec(prior_source(32), _encoder_half(3, 24)),
                BranchSpec("fusion", _decoder(96, 24)),
            ),
        )
    if resolution == 128:
        return GeneratorSpec(
            128,
            (
                BranchSpec(CORRUPTED, _encoder_full(in0, 28)),
                BranchSpec(prior_source(64), _encoder_half(3, 28)),
                BranchSpec(prior_source(32), _encoder_flat(3, 28)),
                BranchSpec("fusion", _decoder(168, 28)),
            ),
        )
    if resolution == 256:
        return GeneratorSpec(
            256,
            (
                BranchSpec(CORRUPTED, _encoder_full(in0, 28)),
                BranchSpec(prior_source(128), _encoder_half(3, 28)),
                BranchSpec(prior_source(64), _encoder_flat(3, 28)),
                # the coarsest prior is upsampled to the 64x64 working size so
                # its stride-1 branch aligns with its siblings
                BranchSpec(prior_source(32), _encoder_flat(3, 28), resize_input_to=64),
                BranchSpec("fusion", _decoder(224, 28)),
            ),
        )
    raise ValueError(f"unsupported generator resolution {resolution}")


@dataclass(frozen=True)
class DiscriminatorSpec:
    resolution: int
    layers: tuple[LayerSpec, ...]


def discriminator_spec(resolution: int) -> DiscriminatorSpec:
    """Four spectral-normalized convs; base width 24 (32/64) or 28 (128/256)."""
    if resolution not in STAGES:
        raise ValueError(f"unsupported discriminator resolution {resolution}")
    n = 24 if resolution in (32, 64) else 28
    sn = dict(spectral_norm=True, bias=False)
    layers = (
        conv(3, n, 4, 2, "leaky_relu", **sn),
        conv(n, 2 * n, 4, 2, "leaky_relu", **sn),
        conv(2 * n, 4 * n, 4, 2, "leaky_relu", **sn),
        conv(4 * n, 1, 4, 1, "none", **sn),
    )
    return DiscriminatorSpec(resolution, layers)


def _activation_module(name: str) -> Optional[nn.Module]:
    if name == "relu":
        return nn.ReLU(inplace=True)
    if name == "leaky_relu":
        return nn.LeakyReLU(0.2, inplace=True)
    if name == "tanh":
        return nn.Tanh()
    return None


def _build_layer(spec: LayerSpec) -> list[nn.Module]:
    cls = nn.Conv2d if spec.kind == "conv" else nn.ConvTranspose2d
    core = cls(spec.in_ch, spec.out_ch, spec.kernel, spec.stride, spec.padding, bias=spec.bias)
    if spec.spectral_norm:
        core = spectral_norm(core)
    act = _activation_module(spec.activation)
    return [core] if act is None else [core, act]


def _build_stack(layers: tuple[LayerSpec, ...]) -> nn.Sequential:
    modules: list[nn.Module] = []
    for spec in layers:
        modules.extend(_build_layer(spec))
    return nn.Sequential(*modules)


class Generator(nn.Module):
    """One progressive stage: parallel input branches plus a fusion block."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        if len(spec.branches) == 1:
            self.branches = nn.ModuleList([_build_stack(spec.branches[0].layers)])
            self.fusion = None
        else:
            self.branches = nn.ModuleList(
                _build_stack(b.layers) for b in spec.branches[:-1]
            )
            self.fusion = _build_stack(spec.branches[-1].layers)

    def _branch_input(self, branch: BranchSpec, corrupted, priors) -> torch.Tensor:
        if branch.input_source == CORRUPTED:
            x = corrupted
        else:
            res = int(branch.input_source.removeprefix("prior"))
            if priors is None or res not in priors:
                raise ValueError(f"generator {self.spec.resolution} needs the {res} output")
            x = priors[res]
        if branch.resize_input_to is not None and x.shape[-1] != branch.resize_input_to:
            size = (branch.resize_input_to, branch.resize_input_to)
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        return x

    def branch_outputs(self, corrupted, priors=None) -> list[torch.Tensor]:
        n = self.spec.resolution
        if corrupted.shape[-2:] != (n, n):
            raise ValueError(
                f"expected {n}x{n} input for the {n}-generator, got {tuple(corrupted.shape[-2:])}"
            )
        specs = self.spec.branches if self.fusion is None else self.spec.branches[:-1]
        return [
            net(self._branch_input(spec, corrupted, priors))
            for spec, net in zip(specs, self.branches)
        ]

    def forward(self, corrupted, priors=None) -> torch.Tensor:
        feats = self.branch_outputs(corrupted, priors)
        if self.fusion is None:
            return feats[0]
        return self.fusion(torch.cat(feats, dim=1))


def build_generator(spec: GeneratorSpec) -> Generator:
    return Generator(spec)


def build_discriminator(resolution: int) -> nn.Sequential:
    return _build_stack(discriminator_spec(resolution).layers)


def init_weights(module: nn.Module, std: float = 0.02, generator=None) -> None:
    """Gaussian(0, std) on every conv / transposed-conv weight, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            weight = getattr(m, "weight_orig", m.weight)
            with torch.no_grad():
                weight.normal_(0.0, std, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()


@dataclass
class PyramidOutput:
    """Generated images per stage, ascending resolution, values in [-1, 1]."""

    outputs: dict[int, torch.Tensor]

    def __getitem__(self, resolution: int) -> torch.Tensor:
        return self.outputs[resolution]

    def __contains__(self, resolution: int) -> bool:
        return resolution in self.outputs

    @property
    def final(self) -> torch.Tensor:
        return self.outputs[max(self.outputs)]


class GeneratorPyramid(nn.Module):
    """The progressive generator stack; each stage consumes all lower outputs."""

    def __init__(self, stages=STAGES, blind: bool = False):
        super().__init__()
        stages = tuple(stages)
        if stages != STAGES[: len(stages)] or not stages:
            raise ValueError(f"stages must be an ascending prefix of {STAGES}, got {stages}")
        self.stages = stages
        self.blind = blind
        self.specs = {n: generator_spec(n, blind) for n in stages}
        self.generators = nn.ModuleDict({str(n): Generator(self.specs[n]) for n in stages})

    def generator(self, resolution: int) -> Generator:
        return self.generators[str(resolution)]

    def forward(self, corrupted, mask, stage: Optional[int] = None, train_stage: Optional[int] = None) -> PyramidOutput:
        """Run the pyramid up to ``stage``.

        ``corrupted`` is the masked image at full resolution; it and the mask
        are downsampled per stage (area / nearest). When ``train_stage`` is
        set, stages below it run without gradient tracking.
        """
        stage = stage or self.stages[-1]
        if stage not in self.stages:
            raise ValueError(f"stage {stage} not in pyramid stages {self.stages}")
        if not self.blind and mask is None:
            raise ValueError("mask is required unless the pyramid was built blind")

        outputs: dict[int, torch.Tensor] = {}
        for n in self.stages:
            if n > stage:
                break
            img = corrupted if corrupted.shape[-1] == n else F.interpolate(corrupted, (n, n), mode="area")
            if self.blind:
                x = img
            else:
                msk = mask if mask.shape[-1] == n else F.interpolate(mask, (n, n), mode="nearest")
                x = torch.cat([img, msk], dim=1)
            gen = self.generators[str(n)]
            if train_stage is not None and n < train_stage:
                with torch.no_grad():
                    outputs[n] = gen(x, outputs)
            else:
                outputs[n] = gen(x, outputs)
        return PyramidOutput(outputs)


def forward_pyramid(pyramid: GeneratorPyramid, corrupted, mask, stage: Optional[int] = None) -> PyramidOutput:
    """Module-level alias for :meth:`GeneratorPyramid.forward`."""
    return pyramid(corrupted, mask, stage=stage)


def composite(output: torch.Tensor, original: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Keep the known pixels of the original, take the generated hole content."""
    return original * mask + output * (1.0 - mask)


@dataclass
class LayerCost:
    network: str
    index: int
    kind: str
    in_ch: int
    out_ch: int
    kernel: int
    out_size: int
    params: int
    mult_adds: int


@dataclass
class EfficiencyReport:
    """Analytic cost of one full-pyramid inference.

    ``mult_adds`` counts each multiply-accumulate once, the convention used
    by the common profiler tools and by published efficiency tables;
    ``total_flops`` counts the multiply and the add separately.
    """

    input_size: int
    per_layer: list[LayerCost] = field(default_factory=list)
    discriminator_params: int = 0

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.per_layer)

    @property
    def total_mult_adds(self) -> int:
        return sum(l.mult_adds for l in self.per_layer)

    @property
    def total_flops(self) -> int:
        return 2 * self.total_mult_adds

    @property
    def gflops(self) -> float:
        return self.total_mult_adds / 1e9

    @property
    def params_millions(self) -> float:
        return self.total_params / 1e6

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": SPEC_VERSION,
                "input_size": self.input_size,
                "total_params": self.total_params,
                "total_mult_adds": self.total_mult_adds,
                "total_flops": self.total_flops,
                "gflops": self.gflops,
                "discriminator_params": self.discriminator_params,
                "per_layer": [vars(l).copy() for l in self.per_layer],
            },
            indent=2,
        )


def _walk_generator(spec: GeneratorSpec, report: EfficiencyReport) -> None:
    name = f"generator{spec.resolution}"
    index = 0
    for branch in spec.branches:
        size = (
            spec.working_size()
            if branch.input_source == "fusion"
            else spec.branch_input_size(branch)
        )
        for layer in branch.layers:
            out = layer.out_size(size)
            report.per_layer.append(
                LayerCost(
                    network=name,
                    index=index,
                    kind=layer.kind,
                    in_ch=layer.in_ch,
                    out_ch=layer.out_ch,
                    kernel=layer.kernel,
                    out_size=out,
                    params=layer.param_count(),
                    mult_adds=layer.mult_adds(size),
                )
            )
            size = out
            index += 1


def count_efficiency(specs: Optional[dict[int, GeneratorSpec]] = None, input_size: int = 256) -> EfficiencyReport:
    """Parameter and multiply-add totals for one ``input_size`` pyramid inference.

    Counts the generator stack (the part that runs at inference);
    discriminator parameters are reported separately.
    """
    if specs is None:
        specs = {n: generator_spec(n) for n in STAGES if n <= input_size}
    report = EfficiencyReport(input_size=input_size)
    for n in sorted(specs):
        _walk_generator(specs[n], report)
    report.discriminator_params = sum(
        l.param_count() for n in sorted(specs) for l in discriminator_spec(n).layers
    )
    return report


def pyramid_manifest(pyramid: GeneratorPyramid) -> dict:
    """Versioned JSON-able description of the generator stack."""
    return {
        "version": SPEC_VERSION,
        "blind": pyramid.blind,
        "stages": list(pyramid.stages),
        "generators": [pyramid.specs[n].to_manifest() for n in pyramid.stages],
    }
