"""Central finite-difference verification of loss gradients."""

import torch

from . import losses
from .extractors import RandomConvFeatures


def finite_difference_error(fn, inputs, step=1e-3):
    """Max relative error between autograd and central-difference gradients.

    ``inputs`` are the tensors the loss is differentiated with respect to;
    the relative error is vector-level per input:
    ||g_a - g_n|| / max(||g_a||, ||g_n||).
    """
    inputs = [t.detach().double().requires_grad_(True) for t in inputs]
    value = fn(*inputs)
    grads = torch.autograd.grad(value, inputs)

    worst = 0.0
    for t, g_a in zip(inputs, grads):
        g_n = torch.zeros_like(t)
        flat_t = t.detach().reshape(-1)
        flat_n = g_n.reshape(-1)
        for i in range(flat_t.numel()):
            orig = flat_t[i].item()
            flat_t[i] = orig + step
            hi = fn(*inputs).item()
            flat_t[i] = orig - step
            lo = fn(*inputs).item()
            flat_t[i] = orig
            flat_n[i] = (hi - lo) / (2 * step)
        denom = max(g_a.norm().item(), g_n.norm().item(), 1e-12)
        worst = max(worst, (g_a - g_n).norm().item() / denom)
    return worst


def loss_suite(seed=0):
    """Named (fn, inputs) cases covering every loss operation."""
    gen = torch.Generator().manual_seed(seed)

    def img():
        return torch.rand((1, 3, 8, 8), generator=gen, dtype=torch.float64) * 1.6 - 0.8

    def scores():
        return torch.rand((1, 1, 8, 8), generator=gen, dtype=torch.float64)

    cfg = losses.SsimConfig()
    extractor = RandomConvFeatures(seed=7)
    logits = torch.randn((4, 3), generator=gen, dtype=torch.float64)
    targets = torch.tensor([0, 2, 1, 0])

    a, b, c, d = img(), img(), img(), img()
    return {
        "cycle_l1": (losses.cycle_l1, [a, b]),
        "color_cycle": (losses.color_cycle, [a, b]),
        "ssim": (lambda u, v: losses.ssim(u, v, cfg), [a, b]),
        "ms_ssim": (lambda u, v: losses.ms_ssim(u, v, cfg), [a, b]),
        "lsgan_d": (losses.lsgan_d, [scores(), scores()]),
        "lsgan_g": (losses.lsgan_g, [scores()]),
        "domain_cls": (lambda l: losses.domain_cls(l, targets), [logits]),
        "identity_unsup": (losses.identity_unsup, [a, b]),
        "identity_sup": (losses.identity_sup, [a, b, c, d]),
        "color_paired": (losses.color_paired, [a, b]),
        "perceptual": (lambda u, v: losses.perceptual(u, v, extractor), [a, b]),
        "total_variation": (losses.total_variation, [a]),
    }


def run_suite(seed=0, step=1e-3):
    """Finite-difference check every loss; returns {name: max relative error}."""
    return {
        name: finite_difference_error(fn, inputs, step)
        for name, (fn, inputs) in loss_suite(seed).items()
    }
