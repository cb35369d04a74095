"""Differentiable training objectives.

All losses are pure functions over (B, C, H, W) tensors (scores and logits
where noted) and reduce by arithmetic mean over all elements unless stated
otherwise; total variation uses sum reduction.
"""

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .data import channel_split
from .exceptions import ShapeError, ValidationError

# canonical multi-scale weights from the original MS-SSIM formulation,
# renormalized so they sum to exactly 1
_MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

_EPS = 1e-8


def _unwrap(x):
    """Accept either a raw tensor or an ImageTensor-style wrapper."""
    return x if isinstance(x, torch.Tensor) else x.data


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


@dataclass(frozen=True)
class SsimConfig:
    """Window, stabilizer and scale-weight settings for SSIM / MS-SSIM."""

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 2.0  # dynamic range L of [-1, 1] images
    scales: int = 5
    scale_weights: tuple = field(default=_MS_WEIGHTS)

    def __post_init__(self):
        total = sum(self.scale_weights)
        object.__setattr__(self, "scale_weights", tuple(w / total for w in self.scale_weights))

    @property
    def c1(self):
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.data_range) ** 2

    @property
    def c3(self):
        return self.c2 / 2


def _gaussian_window(size, sigma, dtype, device):
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return g[:, None] @ g[None, :]


def _ssim_terms(a, b, cfg):
    """Window-mean luminance and contrast-structure maps for one scale."""
    _check_same_shape(a, b)
    c = a.shape[1]
    size = min(cfg.window_size, a.shape[2], a.shape[3])
    if size % 2 == 0:
        size -= 1
    win = _gaussian_window(size, cfg.sigma, a.dtype, a.device).expand(c, 1, size, size)

    mu_a = F.conv2d(a, win, groups=c)
    mu_b = F.conv2d(b, win, groups=c)
    var_a = F.conv2d(a * a, win, groups=c) - mu_a ** 2
    var_b = F.conv2d(b * b, win, groups=c) - mu_b ** 2
    cov = F.conv2d(a * b, win, groups=c) - mu_a * mu_b

    lum = (2 * mu_a * mu_b + cfg.c1) / (mu_a ** 2 + mu_b ** 2 + cfg.c1)
    # combined contrast-structure term; equals c*s for C3 = C2/2
    cs = (2 * cov + cfg.c2) / (var_a + var_b + cfg.c2)
    return lum, cs


def ssim(a, b, cfg=SsimConfig()):
    """Single-scale structural similarity, mean over all windows."""
    a, b = _unwrap(a), _unwrap(b)
    lum, cs = _ssim_terms(a, b, cfg)
    return (lum * cs).mean()


def _feasible_scales(a, cfg):
    size = min(a.shape[2], a.shape[3])
    m = 0
    for j in range(cfg.scales):
        if size // (2 ** j) >= cfg.window_size:
            m = j + 1
    return max(m, 1)


def ms_ssim(a, b, cfg=SsimConfig()):
    """Multi-scale SSIM with 2x2 average-pool downsampling between scales.

    Inputs too small for all configured scales use the largest feasible scale
    count with renormalized weights.
    """
    a, b = _unwrap(a), _unwrap(b)
    _check_same_shape(a, b)
    m = _feasible_scales(a, cfg)
    weights = cfg.scale_weights[:m]
    total = sum(weights)
    weights = [w / total for w in weights]

    value = None
    for j in range(m):
        lum, cs = _ssim_terms(a, b, cfg)
        term = cs.mean().clamp_min(_EPS) ** weights[j]
        if j == m - 1:
            term = term * lum.mean().clamp_min(_EPS) ** weights[j]
        value = term if value is None else value * term
        if j < m - 1:
            a = F.avg_pool2d(a, 2)
            b = F.avg_pool2d(b, 2)
    return value


def cycle_l1(x_hat, x):
    """Mean absolute reconstruction error."""
    x_hat, x = _unwrap(x_hat), _unwrap(x)
    _check_same_shape(x_hat, x)
    return (x_hat - x).abs().mean()


def color_cycle(x_hat, x):
    """Per-channel L1 reconstruction, summed over the R, G, B channels."""
    x_hat, x = _unwrap(x_hat), _unwrap(x)
    _check_same_shape(x_hat, x)
    return sum(cycle_l1(h, c) for h, c in zip(channel_split(x_hat), channel_split(x)))


def lsgan_d(src_real, src_fake):
    """Least-squares discriminator loss: real -> 1, fake -> 0."""
    src_real, src_fake = _unwrap(src_real), _unwrap(src_fake)
    return ((src_real - 1) ** 2).mean() + (src_fake ** 2).mean()


def lsgan_g(src_fake):
    """Least-squares generator loss: fake -> 1."""
    src_fake = _unwrap(src_fake)
    return ((src_fake - 1) ** 2).mean()


def domain_cls(logits, target):
    """Mean cross-entropy of domain logits against target indices."""
    if hasattr(target, "index") and not isinstance(target, torch.Tensor):
        target = torch.tensor([target.index], device=logits.device)
    if target.dim() == 0:
        target = target[None]
    if logits.shape[0] != target.shape[0]:
        raise ShapeError(f"batch mismatch: {logits.shape[0]} logits vs {target.shape[0]} targets")
    return F.cross_entropy(logits, target)


def identity_unsup(g_r_output, x):
    """Self-guided reconstruction penalty for the unsupervised task."""
    return cycle_l1(g_r_output, x)


def identity_sup(gt_xx, x, gt_yy, y):
    """Sum of self-guided L1 penalties for both directions of a pair."""
    return cycle_l1(gt_xx, x) + cycle_l1(gt_yy, y)


def color_paired(y_prime, y):
    """Channel-wise L1 between a generated image and its paired target."""
    return color_cycle(y_prime, y)


def perceptual(y_prime, y, extractor):
    """Weighted L1 over the extractor's declared feature layers."""
    y_prime, y = _unwrap(y_prime), _unwrap(y)
    _check_same_shape(y_prime, y)
    feats_p = extractor.layers(y_prime)
    feats_t = extractor.layers(y)
    loss = None
    for w, fp, ft in zip(extractor.weights, feats_p, feats_t):
        term = w * (fp - ft).abs().mean()
        loss = term if loss is None else loss + term
    return loss


def total_variation(y_prime):
    """Anisotropic total variation with sum reduction."""
    y = _unwrap(y_prime)
    if y.dim() != 4:
        raise ShapeError(f"expected (B, C, H, W), got {tuple(y.shape)}")
    horiz = (y[..., :, 1:] - y[..., :, :-1]).abs().sum()
    vert = (y[..., 1:, :] - y[..., :-1, :]).abs().sum()
    return horiz + vert


@dataclass(frozen=True)
class UnsupervisedWeights:
    """Coefficients of the unsupervised full objective."""

    cls: float = 1.0
    cycle: float = 10.0
    msssim: float = 1.0
    identity: float = 0.5

    def __post_init__(self):
        if min(self.cls, self.cycle, self.msssim, self.identity) < 0:
            raise ValidationError("loss weights must be >= 0")


@dataclass(frozen=True)
class SupervisedWeights:
    """Coefficients of the supervised full objective."""

    color: float = 800.0
    cycle: float = 0.1
    identity: float = 0.01
    perceptual: float = 1000.0
    tv: float = 1e-6

    def __post_init__(self):
        if min(self.color, self.cycle, self.identity, self.perceptual, self.tv) < 0:
            raise ValidationError("loss weights must be >= 0")


def full_unsup(terms, w):
    """Weighted unsupervised objective.

    ``terms`` maps {lsgan, cls, colorcyc, msssim_loss, id} to raw values; the
    MS-SSIM entry is already in loss form (1 - similarity).
    """
    return (
        terms["lsgan"]
        + w.cls * terms["cls"]
        + w.cycle * terms["colorcyc"]
        + w.msssim * terms["msssim_loss"]
        + w.identity * terms["id"]
    )


def full_sup(terms, w):
    """Weighted supervised objective over {cgan, color, cyc, id, vgg, tv}."""
    return (
        terms["cgan"]
        + w.color * terms["color"]
        + w.cycle * terms["cyc"]
        + w.identity * terms["id"]
        + w.perceptual * terms["vgg"]
        + w.tv * terms["tv"]
    )


def msssim_loss(a, b, cfg=SsimConfig()):
    """MS-SSIM similarity converted to a minimized term."""
    return 1.0 - ms_ssim(a, b, cfg)
