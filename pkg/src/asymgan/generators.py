"""Asymmetric translation/reconstruction generator pair.

Architecture tiers:

* TIER_I   -- 1x1 conditioning merge followed by seven 3x3 convs at width 6
              and a 3-channel projection (~2.9K parameters).
* TIER_II  -- symmetric encoder-decoder, widths 64-128-256 (~1.4M parameters).
* TIER_III -- TIER_II plus six residual blocks at the bottleneck (~8.5M).
* resnet9  -- 9-residual-block encoder-decoder with configurable first-layer
              width, used for skeleton-conditioned translation.

Domain labels enter as a learned 64-dim embedding broadcast to a feature map
and merged with a 1x1 convolution; skeleton maps are concatenated with the
input image channel-wise.
"""

import io
import json
from dataclasses import dataclass

import torch
import torch.nn as nn

from .data import DomainLabel, SkeletonMap
from .exceptions import ShapeError, SpecError, ValidationError

TIER1_WIDTH = 6
LABEL_EMBED_DIM = 64

DOMAIN_LABEL = "domain_label"
SKELETON = "skeleton"

FULL = "full"
PARTIAL_ENCODER = "partial_encoder"
NONE = "none"


@dataclass(frozen=True)
class ArchTier:
    kind: str  # "tier_i" | "tier_ii" | "tier_iii" | "resnet9"
    base_width: int = 64

    def __post_init__(self):
        if self.kind not in ("tier_i", "tier_ii", "tier_iii", "resnet9"):
            raise SpecError(f"unknown architecture tier {self.kind!r}")
        if self.base_width < 1:
            raise SpecError("base_width must be >= 1")


TIER_I = ArchTier("tier_i")
TIER_II = ArchTier("tier_ii")
TIER_III = ArchTier("tier_iii")


def resnet9(base_width):
    return ArchTier("resnet9", base_width)


@dataclass(frozen=True)
class GuidanceSpec:
    kind: str  # DOMAIN_LABEL | SKELETON
    num_domains: int = 0
    embed_dim: int = LABEL_EMBED_DIM
    skeleton_channels: int = 3

    def __post_init__(self):
        if self.kind == DOMAIN_LABEL:
            if self.num_domains < 2:
                raise SpecError("domain-label guidance needs num_domains >= 2")
        elif self.kind == SKELETON:
            if self.skeleton_channels < 1:
                raise SpecError("skeleton guidance needs skeleton_channels >= 1")
        else:
            raise SpecError(f"unknown guidance kind {self.kind!r}")


@dataclass(frozen=True)
class GeneratorPairSpec:
    translate_arch: ArchTier
    reconstruct_arch: ArchTier
    sharing: str
    guidance: GuidanceSpec

    def __post_init__(self):
        if self.sharing not in (FULL, PARTIAL_ENCODER, NONE):
            raise SpecError(f"unknown sharing mode {self.sharing!r}")
        if self.sharing == FULL and self.translate_arch != self.reconstruct_arch:
            raise SpecError("full sharing requires identical architecture tiers")

    def to_json(self):
        return json.dumps(
            {
                "translate_arch": [self.translate_arch.kind, self.translate_arch.base_width],
                "reconstruct_arch": [self.reconstruct_arch.kind, self.reconstruct_arch.base_width],
                "sharing": self.sharing,
                "guidance": {
                    "kind": self.guidance.kind,
                    "num_domains": self.guidance.num_domains,
                    "embed_dim": self.guidance.embed_dim,
                    "skeleton_channels": self.guidance.skeleton_channels,
                },
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        g = d["guidance"]
        return cls(
            translate_arch=ArchTier(*d["translate_arch"]),
            reconstruct_arch=ArchTier(*d["reconstruct_arch"]),
            sharing=d["sharing"],
            guidance=GuidanceSpec(
                kind=g["kind"],
                num_domains=g["num_domains"],
                embed_dim=g["embed_dim"],
                skeleton_channels=g["skeleton_channels"],
            ),
        )


def init_weights(module):
    """Zero-mean Gaussian init, std 0.02, for all conv/linear weights."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class LabelEmbedding(nn.Module):
    """One-hot domain label -> 64-dim embedding broadcast to a feature map."""

    def __init__(self, num_domains, embed_dim=LABEL_EMBED_DIM):
        super().__init__()
        self.num_domains = num_domains
        self.embed_dim = embed_dim
        self.linear = nn.Linear(num_domains, embed_dim, bias=False)
        # unit-scale init: the std-0.02 conv convention would leave the
        # conditioning signal indistinguishable from noise
        nn.init.normal_(self.linear.weight, 0.0, 1.0)

    def forward(self, one_hot, spatial):
        if one_hot.dim() == 1:
            one_hot = one_hot[None]
        if one_hot.shape[-1] != self.num_domains:
            raise ValidationError(
                f"label length {one_hot.shape[-1]} != num_domains {self.num_domains}"
            )
        hot = (one_hot == 1.0).sum(dim=-1)
        if not ((hot == 1).all() and ((one_hot == 0.0) | (one_hot == 1.0)).all()):
            raise ValidationError("label is not one-hot")
        h, w = spatial
        emb = self.linear(one_hot)
        return emb[:, :, None, None].expand(-1, -1, h, w)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def _conv_in_relu(c_in, c_out, k, stride=1, padding=0):
    return [nn.Conv2d(c_in, c_out, k, stride, padding), nn.InstanceNorm2d(c_out), nn.ReLU(inplace=True)]


def _deconv_in_relu(c_in, c_out, k, stride, padding, output_padding=0):
    return [
        nn.ConvTranspose2d(c_in, c_out, k, stride, padding, output_padding=output_padding),
        nn.InstanceNorm2d(c_out),
        nn.ReLU(inplace=True),
    ]


class Generator(nn.Module):
    """Image + guidance -> image, tanh-terminated.

    Submodules: ``encoder`` (image features), ``embed``/``merge`` (label
    conditioning, label mode only), ``body``, ``decoder``.  Parameter sharing
    between a generator pair is realized by aliasing submodules.
    """

    def __init__(self, tier, guidance, image_channels=3):
        super().__init__()
        self.tier = tier
        self.guidance = guidance
        self.image_channels = image_channels
        label_mode = guidance.kind == DOMAIN_LABEL
        in_ch = image_channels + (0 if label_mode else guidance.skeleton_channels)

        if tier.kind == "tier_i":
            w = TIER1_WIDTH
            self.down_factor = 1
            self.encoder = nn.Identity()
            merge_in = in_ch + (guidance.embed_dim if label_mode else 0)
            self.merge = nn.Sequential(nn.Conv2d(merge_in, w, 1), nn.ReLU(inplace=True))
            body = []
            for _ in range(7):
                body += [nn.Conv2d(w, w, 3, padding=1), nn.ReLU(inplace=True)]
            self.body = nn.Sequential(*body)
            self.decoder = nn.Sequential(nn.Conv2d(w, image_channels, 3, padding=1), nn.Tanh())
        elif tier.kind in ("tier_ii", "tier_iii"):
            feat = 256
            self.down_factor = 4
            self.encoder = nn.Sequential(
                *_conv_in_relu(in_ch, 64, 7, padding=3),
                *_conv_in_relu(64, 128, 4, stride=2, padding=1),
                *_conv_in_relu(128, feat, 4, stride=2, padding=1),
            )
            merge_in = feat + (guidance.embed_dim if label_mode else 0)
            self.merge = nn.Sequential(nn.Conv2d(merge_in, feat, 1), nn.ReLU(inplace=True))
            blocks = 6 if tier.kind == "tier_iii" else 0
            self.body = nn.Sequential(*[ResidualBlock(feat) for _ in range(blocks)])
            self.decoder = nn.Sequential(
                *_deconv_in_relu(feat, 128, 4, 2, 1),
                *_deconv_in_relu(128, 64, 4, 2, 1),
                nn.Conv2d(64, image_channels, 7, padding=3),
                nn.Tanh(),
            )
        else:  # resnet9
            w = tier.base_width
            feat = 4 * w
            self.down_factor = 4
            self.encoder = nn.Sequential(
                *_conv_in_relu(in_ch, w, 7, padding=3),
                *_conv_in_relu(w, 2 * w, 3, stride=2, padding=1),
                *_conv_in_relu(2 * w, feat, 3, stride=2, padding=1),
            )
            if label_mode:
                self.merge = nn.Sequential(
                    nn.Conv2d(feat + guidance.embed_dim, feat, 1), nn.ReLU(inplace=True)
                )
            else:
                self.merge = nn.Identity()
            self.body = nn.Sequential(*[ResidualBlock(feat) for _ in range(9)])
            self.decoder = nn.Sequential(
                *_deconv_in_relu(feat, 2 * w, 3, 2, 1, output_padding=1),
                *_deconv_in_relu(2 * w, w, 3, 2, 1, output_padding=1),
                nn.Conv2d(w, image_channels, 7, padding=3),
                nn.Tanh(),
            )

        self.apply(init_weights)
        # after the blanket init so the embedding keeps its unit-scale weights
        if label_mode:
            self.embed = LabelEmbedding(guidance.num_domains, guidance.embed_dim)
        else:
            self.embed = None

    def _label_map(self, guidance, spatial, batch, device, dtype):
        if isinstance(guidance, DomainLabel):
            one_hot = guidance.one_hot.to(device=device, dtype=dtype)[None].expand(batch, -1)
        else:
            one_hot = guidance.to(device=device, dtype=dtype)
            if one_hot.dim() == 1:
                one_hot = one_hot[None].expand(batch, -1)
        return self.embed(one_hot, spatial)

    def forward(self, x, guidance):
        if x.dim() != 4 or x.shape[1] != self.image_channels:
            raise ShapeError(
                f"expected (B, {self.image_channels}, H, W) input, got {tuple(x.shape)}"
            )
        h, w = x.shape[2], x.shape[3]
        if h % self.down_factor or w % self.down_factor:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by {self.down_factor}")

        if self.guidance.kind == SKELETON:
            if isinstance(guidance, DomainLabel) or guidance is None:
                raise ValidationError("skeleton-guided generator needs a skeleton map")
            s = guidance.data if isinstance(guidance, SkeletonMap) else guidance
            if s.dim() == 3:
                s = s[None].expand(x.shape[0], -1, -1, -1)
            if s.shape[2:] != x.shape[2:]:
                raise ShapeError(
                    f"skeleton spatial dims {tuple(s.shape[2:])} != image {tuple(x.shape[2:])}"
                )
            feats = self.encoder(torch.cat([x, s.to(x.dtype)], dim=1))
            feats = self.merge(feats)
        else:
            if isinstance(guidance, SkeletonMap):
                raise ValidationError("label-guided generator needs a domain label")
            feats = self.encoder(x)
            lmap = self._label_map(guidance, feats.shape[2:], x.shape[0], x.device, x.dtype)
            feats = self.merge(torch.cat([feats, lmap], dim=1))
        return self.decoder(self.body(feats))


def build_pair(spec, image_channels=3, image_size=64):
    """Build (translate, reconstruct) generators with the requested sharing."""
    gt = Generator(spec.translate_arch, spec.guidance, image_channels)
    if image_size % gt.down_factor:
        raise ShapeError(f"image_size {image_size} not divisible by {gt.down_factor}")
    if spec.sharing == FULL:
        return gt, gt
    gr = Generator(spec.reconstruct_arch, spec.guidance, image_channels)
    if image_size % gr.down_factor:
        raise ShapeError(f"image_size {image_size} not divisible by {gr.down_factor}")
    if spec.sharing == PARTIAL_ENCODER:
        shapes_t = [tuple(p.shape) for p in gt.encoder.parameters()]
        shapes_r = [tuple(p.shape) for p in gr.encoder.parameters()]
        if shapes_t != shapes_r:
            raise SpecError("partial-encoder sharing requires identical encoder shapes")
        gr.encoder = gt.encoder
    return gt, gr


def count_parameters(*modules):
    """Number of scalar parameters, counting shared tensors once."""
    seen = {}
    for m in modules:
        for p in m.parameters():
            seen[id(p)] = p.numel()
    return sum(seen.values())


def encoder_parameter_count(g):
    return count_parameters(g.encoder)


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(path, gt, gr, disc, pair_spec, extra=None):
    payload = {
        "pair_spec": pair_spec.to_json(),
        "gt": gt.state_dict(),
        "gr": gr.state_dict(),
        "disc": disc.state_dict() if disc is not None else None,
        "extra": extra or {},
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, expected_spec=None):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec = GeneratorPairSpec.from_json(payload["pair_spec"])
    if expected_spec is not None and spec != expected_spec:
        raise SpecError("checkpoint generator spec does not match the expected spec")
    return spec, payload


def restore_pair(path, image_channels=3, image_size=64, expected_spec=None):
    """Rebuild a generator pair from a checkpoint."""
    spec, payload = load_checkpoint(path, expected_spec)
    gt, gr = build_pair(spec, image_channels, image_size)
    gt.load_state_dict(payload["gt"])
    gr.load_state_dict(payload["gr"])
    return spec, gt, gr, payload
