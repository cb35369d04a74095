"""PatchGAN discriminators.

Two kinds:

* ``multidomain`` -- unconditional trunk plus a domain-classification head
  producing one logit per domain.
* ``triplet``     -- 70x70 PatchGAN over the channel-wise concatenation of
  (source image, skeleton, candidate image).

``dual=True`` wraps two identical discriminators, the second fed 2x
downsampled inputs; callers average the resulting losses.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeError, SpecError
from .generators import init_weights

MULTIDOMAIN = "multidomain"
TRIPLET = "triplet"


@dataclass(frozen=True)
class DiscriminatorSpec:
    kind: str
    num_domains: int = 0
    image_channels: int = 3
    skeleton_channels: int = 3
    base_width: int = 64
    n_layers: int = 3
    dual: bool = False

    def __post_init__(self):
        if self.kind not in (MULTIDOMAIN, TRIPLET):
            raise SpecError(f"unknown discriminator kind {self.kind!r}")
        if self.kind == MULTIDOMAIN and self.num_domains < 2:
            raise SpecError("multidomain discriminator needs num_domains >= 2")
        if self.n_layers < 1:
            raise SpecError("n_layers must be >= 1")
        if self.base_width < 1:
            raise SpecError("base_width must be >= 1")


@dataclass
class DiscriminatorOutput:
    src_map: torch.Tensor
    class_logits: Optional[torch.Tensor] = None


def _trunk_layers(spec, in_channels):
    """Stride-2 4x4 stack, widths doubling from base_width, capped at 8x."""
    layers = [nn.Conv2d(in_channels, spec.base_width, 4, 2, 1), nn.LeakyReLU(0.2, inplace=True)]
    width = spec.base_width
    for _ in range(1, spec.n_layers):
        nxt = min(width * 2, spec.base_width * 8)
        layers += [
            nn.Conv2d(width, nxt, 4, 2, 1),
            nn.InstanceNorm2d(nxt),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        width = nxt
    return layers, width


class MultidomainDiscriminator(nn.Module):
    """Patch realism scores plus per-sample domain logits."""

    def __init__(self, spec, image_size):
        super().__init__()
        self.spec = spec
        if image_size % (2 ** spec.n_layers):
            raise ShapeError(f"image_size {image_size} not divisible by 2^{spec.n_layers}")
        self.in_channels = spec.image_channels
        layers, width = _trunk_layers(spec, self.in_channels)
        self.trunk = nn.Sequential(*layers)
        self.src_head = nn.Conv2d(width, 1, 3, 1, 1, bias=False)
        bottleneck = image_size // (2 ** spec.n_layers)
        self.cls_head = nn.Conv2d(width, spec.num_domains, bottleneck, bias=False)
        self.apply(init_weights)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        h = self.trunk(x)
        src = self.src_head(h)
        logits = self.cls_head(h).reshape(x.shape[0], self.spec.num_domains)
        return DiscriminatorOutput(src_map=src, class_logits=logits)


class TripletDiscriminator(nn.Module):
    """70x70 PatchGAN over a (source, skeleton, candidate) concatenation."""

    def __init__(self, spec, image_size):
        super().__init__()
        self.spec = spec
        self.in_channels = 2 * spec.image_channels + spec.skeleton_channels
        layers, width = _trunk_layers(spec, self.in_channels)
        top = min(width * 2, spec.base_width * 8)
        layers += [
            nn.Conv2d(width, top, 4, 1, 1),
            nn.InstanceNorm2d(top),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(top, 1, 4, 1, 1),
        ]
        self.net = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, x, skeleton, y):
        for name, t in (("skeleton", skeleton), ("candidate", y)):
            if t.shape[2:] != x.shape[2:]:
                raise ShapeError(
                    f"{name} spatial dims {tuple(t.shape[2:])} != source {tuple(x.shape[2:])}"
                )
        inp = torch.cat([x, skeleton, y], dim=1)
        if inp.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} total channels, got {inp.shape[1]}")
        return DiscriminatorOutput(src_map=self.net(inp))


class DualDiscriminator(nn.Module):
    """Full- plus half-resolution discriminator pair with averaged losses."""

    def __init__(self, fine, coarse):
        super().__init__()
        self.fine = fine
        self.coarse = coarse

    def forward(self, *inputs):
        down = [F.avg_pool2d(t, 2) for t in inputs]
        return [self.fine(*inputs), self.coarse(*down)]


def build_discriminator(spec, image_size):
    cls = MultidomainDiscriminator if spec.kind == MULTIDOMAIN else TripletDiscriminator
    if spec.dual:
        return DualDiscriminator(cls(spec, image_size), cls(spec, image_size // 2))
    return cls(spec, image_size)


def outputs_of(disc, *inputs):
    """Normalize single/dual discriminator results to a list of outputs."""
    out = disc(*inputs)
    return out if isinstance(out, list) else [out]


def receptive_field_from_layers(layers):
    """Receptive field of one output unit for a [(kernel, stride), ...] stack."""
    rf, jump = 1, 1
    for k, s in layers:
        rf += (k - 1) * jump
        jump *= s
    return rf


def spec_layers(spec):
    """(kernel, stride) sequence of the discriminator a spec describes."""
    layers = [(4, 2)] * spec.n_layers
    if spec.kind == TRIPLET:
        layers += [(4, 1), (4, 1)]
    else:
        layers += [(3, 1)]
    return layers


def receptive_field(spec):
    return receptive_field_from_layers(spec_layers(spec))
