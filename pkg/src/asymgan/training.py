"""Optimization protocol: replay buffer, per-step updates and the epoch loop.

Per-step ordering follows discriminator first, then the translation
generator, then the reconstruction generator.  The cycle term backpropagates
through the full chain during the translation-generator update; the
reconstruction generator then re-evaluates on the detached translation, so
each sub-update mutates exactly one parameter set.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .data import UNPAIRED, DomainLabel, load_paired_arrays, load_unpaired_arrays
from .discriminators import (
    MULTIDOMAIN,
    TRIPLET,
    DiscriminatorSpec,
    build_discriminator,
    outputs_of,
)
from .exceptions import TrainingError, ValidationError
from .extractors import RandomConvFeatures
from .generators import FULL, build_pair, save_checkpoint
from .losses import SsimConfig, SupervisedWeights, UnsupervisedWeights


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 200
    buffer_capacity: int = 50
    loss_weights: object = None  # UnsupervisedWeights or SupervisedWeights
    dual_discriminator: bool = False
    seed: int = 0
    lr_decay: bool = False
    checkpoint_every: int = 10
    max_steps: int = 0  # 0 = no cap; desk-scale runs set a step budget

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.buffer_capacity < 0:
            raise ValidationError("buffer_capacity must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


class ReplayBuffer:
    """Bounded history of detached generated images (image pool).

    While filling, every query is stored and returned unchanged.  Once full,
    each incoming image is returned as-is with probability 0.5; otherwise a
    uniformly random stored image is returned and replaced by the newcomer.
    """

    def __init__(self, capacity, rng=None):
        self.capacity = capacity
        self.storage = []
        self.rng = rng if rng is not None else np.random.default_rng()

    def __len__(self):
        return len(self.storage)

    def query(self, fresh):
        if self.capacity == 0:
            return fresh
        out = []
        for img in fresh.detach():
            img = img[None]
            if len(self.storage) < self.capacity:
                self.storage.append(img)
                out.append(img)
            elif self.rng.random() < 0.5:
                out.append(img)
            else:
                idx = int(self.rng.integers(len(self.storage)))
                out.append(self.storage[idx])
                self.storage[idx] = img
        return torch.cat(out)


def _scalar(value):
    return value.detach().item() if torch.is_tensor(value) else float(value)


def _check_finite(report):
    for name, value in report.items():
        if isinstance(value, float) and not np.isfinite(value):
            raise TrainingError(name)
    return report


def _exclusive_params(module, shared_with):
    shared = {id(p) for p in shared_with.parameters()}
    return [p for p in module.parameters() if id(p) not in shared]


@dataclass
class UnsupModels:
    gt: torch.nn.Module
    gr: torch.nn.Module
    disc: torch.nn.Module
    opt_d: torch.optim.Optimizer
    opt_gt: torch.optim.Optimizer
    opt_gr: torch.optim.Optimizer  # None under full sharing
    buffer: ReplayBuffer
    ssim_cfg: SsimConfig = field(default_factory=SsimConfig)

    def zero_all(self):
        for opt in (self.opt_d, self.opt_gt, self.opt_gr):
            if opt is not None:
                opt.zero_grad(set_to_none=True)


def build_unsup_models(pair_spec, cfg, image_size, image_channels=3):
    torch.manual_seed(cfg.seed)
    gt, gr = build_pair(pair_spec, image_channels, image_size)
    dspec = DiscriminatorSpec(
        kind=MULTIDOMAIN,
        num_domains=pair_spec.guidance.num_domains,
        image_channels=image_channels,
        dual=cfg.dual_discriminator,
    )
    disc = build_discriminator(dspec, image_size)
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.learning_rate, betas=betas)
    opt_gt = torch.optim.Adam(gt.parameters(), lr=cfg.learning_rate, betas=betas)
    gr_params = _exclusive_params(gr, gt)
    opt_gr = (
        torch.optim.Adam(gr_params, lr=cfg.learning_rate, betas=betas) if gr_params else None
    )
    buffer = ReplayBuffer(cfg.buffer_capacity, np.random.default_rng(cfg.seed))
    return UnsupModels(gt=gt, gr=gr, disc=disc, opt_d=opt_d, opt_gt=opt_gt, opt_gr=opt_gr, buffer=buffer)


def _mean_lsgan_d(disc, real, pooled):
    outs_real = outputs_of(disc, real)
    outs_fake = outputs_of(disc, pooled)
    adv = sum(losses.lsgan_d(r.src_map, f.src_map) for r, f in zip(outs_real, outs_fake)) / len(
        outs_real
    )
    return adv, outs_real


def train_step_unsup(models, x, z_x, z_y, weights, step=0, epoch=0):
    """One unsupervised optimization step; returns a StepReport dict."""
    if z_x.index == z_y.index:
        raise ValidationError("target domain must differ from source domain")
    gt, gr, disc = models.gt, models.gr, models.disc
    t0 = time.perf_counter()

    # (1) discriminator: real vs pooled fake, plus real-image classification
    models.zero_all()
    with torch.no_grad():
        fake = gt(x, z_y)
    pooled = models.buffer.query(fake)
    d_adv, outs_real = _mean_lsgan_d(disc, x, pooled)
    target_x = torch.full((x.shape[0],), z_x.index, dtype=torch.long)
    d_cls = sum(
        losses.domain_cls(o.class_logits, target_x) for o in outs_real
    ) / len(outs_real)
    d_total = d_adv + weights.cls * d_cls
    d_total.backward()
    models.opt_d.step()

    # (2) translation generator: adversarial + fake classification + cycle terms
    models.zero_all()
    fake = gt(x, z_y)
    outs_fake = outputs_of(disc, fake)
    g_adv = sum(losses.lsgan_g(o.src_map) for o in outs_fake) / len(outs_fake)
    target_y = torch.full((x.shape[0],), z_y.index, dtype=torch.long)
    g_cls = sum(losses.domain_cls(o.class_logits, target_y) for o in outs_fake) / len(outs_fake)
    recon = gr(fake, z_x)
    cyc = losses.color_cycle(recon, x)
    ms_loss = losses.msssim_loss(recon, x, models.ssim_cfg)
    gt_total = g_adv + weights.cls * g_cls + weights.cycle * cyc + weights.msssim * ms_loss
    gt_total.backward()
    models.opt_gt.step()

    # (3) reconstruction generator: cycle on the detached translation + identity
    models.zero_all()
    fake_detached = fake.detach()
    recon2 = gr(fake_detached, z_x)
    gr_cyc = losses.color_cycle(recon2, x)
    idt = losses.identity_unsup(gr(x, z_x), x)
    gr_total = weights.cycle * gr_cyc + weights.identity * idt
    if models.opt_gr is not None:
        gr_total.backward()
        models.opt_gr.step()

    report = {
        "step": step,
        "epoch": epoch,
        "d_adv": d_adv.item(),
        "d_cls": d_cls.item(),
        "d_total": d_total.item(),
        "g_adv": g_adv.item(),
        "g_cls": g_cls.item(),
        "cycle": cyc.item(),
        "msssim_loss": ms_loss.item(),
        "gt_total": gt_total.item(),
        "gr_cycle": gr_cyc.item(),
        "identity": idt.item(),
        "gr_total": gr_total.item(),
        "wall_time": time.perf_counter() - t0,
    }
    return _check_finite(report)


@dataclass
class SupModels:
    gt: torch.nn.Module
    gr: torch.nn.Module
    disc: torch.nn.Module
    opt_d: torch.optim.Optimizer
    opt_g: torch.optim.Optimizer
    extractor: object
    ssim_cfg: SsimConfig = field(default_factory=SsimConfig)

    def zero_all(self):
        self.opt_d.zero_grad(set_to_none=True)
        self.opt_g.zero_grad(set_to_none=True)


def build_sup_models(pair_spec, cfg, image_size, image_channels=3, extractor=None):
    torch.manual_seed(cfg.seed)
    gt, gr = build_pair(pair_spec, image_channels, image_size)
    dspec = DiscriminatorSpec(
        kind=TRIPLET,
        image_channels=image_channels,
        skeleton_channels=pair_spec.guidance.skeleton_channels,
        dual=cfg.dual_discriminator,
    )
    disc = build_discriminator(dspec, image_size)
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.learning_rate, betas=betas)
    g_params = list(gt.parameters()) + _exclusive_params(gr, gt)
    opt_g = torch.optim.Adam(g_params, lr=cfg.learning_rate, betas=betas)
    return SupModels(
        gt=gt,
        gr=gr,
        disc=disc,
        opt_d=opt_d,
        opt_g=opt_g,
        extractor=extractor if extractor is not None else RandomConvFeatures(seed=cfg.seed),
    )


def train_step_sup(models, x, l_x, y, l_y, weights, step=0, epoch=0, both_cycles=True):
    """One supervised optimization step over both cycle directions."""
    gt, gr, disc = models.gt, models.gr, models.disc
    t0 = time.perf_counter()

    # (1) discriminator on real vs fake triplets
    models.zero_all()
    with torch.no_grad():
        y_fake = gt(x, l_y)
    outs_real = outputs_of(disc, x, l_y, y)
    outs_fake = outputs_of(disc, x, l_y, y_fake)
    d_total = sum(
        losses.lsgan_d(r.src_map, f.src_map) for r, f in zip(outs_real, outs_fake)
    ) / len(outs_real)
    d_total.backward()
    models.opt_d.step()

    # (2) joint generator step minimizing the full supervised objective
    models.zero_all()
    directions = [(x, l_x, y, l_y)]
    if both_cycles:
        directions.append((y, l_y, x, l_x))
    cgan = color = cyc = tv = 0.0
    vgg = 0.0
    for src, l_src, dst, l_dst in directions:
        out = gt(src, l_dst)
        rec = gr(out, l_src)
        outs = outputs_of(disc, src, l_dst, out)
        cgan = cgan + sum(losses.lsgan_g(o.src_map) for o in outs) / len(outs)
        color = color + losses.color_paired(out, dst)
        cyc = cyc + losses.cycle_l1(rec, src)
        tv = tv + losses.total_variation(out)
        if weights.perceptual > 0:
            vgg = vgg + losses.perceptual(out, dst, models.extractor)
    idt = losses.identity_sup(gt(x, l_x), x, gt(y, l_y), y)
    terms = {"cgan": cgan, "color": color, "cyc": cyc, "id": idt, "vgg": vgg, "tv": tv}
    g_total = losses.full_sup(terms, weights)
    g_total.backward()
    models.opt_g.step()

    report = {
        "step": step,
        "epoch": epoch,
        "d_total": d_total.item(),
        "g_adv": _scalar(cgan),
        "color": _scalar(color),
        "cycle": _scalar(cyc),
        "identity": idt.item(),
        "perceptual": _scalar(vgg),
        "tv": _scalar(tv),
        "g_total": g_total.item(),
        "wall_time": time.perf_counter() - t0,
    }
    return _check_finite(report)


class _UnpairedSampler:
    def __init__(self, manifest, seed):
        self.arrays = load_unpaired_arrays(manifest)
        self.domains = manifest.domains
        self.m = len(self.domains)
        self.rng = np.random.default_rng(seed)

    def batch(self, batch_size):
        src = int(self.rng.integers(self.m))
        others = [k for k in range(self.m) if k != src]
        dst = int(self.rng.choice(others))
        pool = self.arrays[self.domains[src]]
        idx = self.rng.integers(pool.shape[0], size=batch_size)
        x = pool[torch.as_tensor(idx)]
        return x, DomainLabel(src, self.m), DomainLabel(dst, self.m)

    def steps_per_epoch(self, batch_size):
        total = sum(a.shape[0] for a in self.arrays.values())
        return max(1, total // batch_size)


class _PairedSampler:
    def __init__(self, manifest, seed):
        self.images, self.skeletons = load_paired_arrays(manifest, "train")
        self.rng = np.random.default_rng(seed)

    def batch(self, batch_size):
        n = self.images.shape[0]
        i = torch.as_tensor(self.rng.integers(n, size=batch_size))
        j = torch.as_tensor(self.rng.integers(n, size=batch_size))
        return self.images[i], self.skeletons[i], self.images[j], self.skeletons[j]

    def steps_per_epoch(self, batch_size):
        return max(1, self.images.shape[0] // batch_size)


def train_loop(manifest, pair_spec, cfg, out_dir, callbacks=()):
    """Run the full training protocol; returns the final checkpoint path.

    Writes one JSON object per step to ``train_log.jsonl`` and checkpoints
    every ``cfg.checkpoint_every`` epochs plus a final one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    unsupervised = manifest.mode == UNPAIRED
    image_size = manifest.image_size

    if unsupervised:
        if pair_spec.guidance.kind != "domain_label":
            raise ValidationError("unpaired manifest requires domain-label guidance")
        weights = cfg.loss_weights or UnsupervisedWeights()
        models = build_unsup_models(pair_spec, cfg, image_size)
        sampler = _UnpairedSampler(manifest, cfg.seed)
    else:
        if pair_spec.guidance.kind != "skeleton":
            raise ValidationError("paired manifest requires skeleton guidance")
        weights = cfg.loss_weights or SupervisedWeights()
        models = build_sup_models(pair_spec, cfg, image_size)
        sampler = _PairedSampler(manifest, cfg.seed)

    log_path = out_dir / "train_log.jsonl"
    step = 0
    steps_per_epoch = sampler.steps_per_epoch(cfg.batch_size)
    extra = {"domains": manifest.domains, "image_size": image_size, "mode": manifest.mode}

    def checkpoint(name):
        path = out_dir / name
        save_checkpoint(path, models.gt, models.gr, models.disc, pair_spec, extra=extra)
        return path

    with open(log_path, "w") as log:
        done = False
        for epoch in range(cfg.epochs):
            for _ in range(steps_per_epoch):
                if cfg.max_steps and step >= cfg.max_steps:
                    done = True
                    break
                if unsupervised:
                    x, z_x, z_y = sampler.batch(cfg.batch_size)
                    report = train_step_unsup(models, x, z_x, z_y, weights, step, epoch)
                else:
                    x, l_x, y, l_y = sampler.batch(cfg.batch_size)
                    report = train_step_sup(models, x, l_x, y, l_y, weights, step, epoch)
                log.write(json.dumps(report) + "\n")
                for cb in callbacks:
                    cb(report)
                step += 1
            if done:
                break
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                checkpoint(f"ckpt_epoch_{epoch + 1:04d}.pt")
            if cfg.lr_decay:
                frac = 1.0 - (epoch + 1) / cfg.epochs
                for opt in (models.opt_d, models.opt_gt if unsupervised else models.opt_g,
                            models.opt_gr if unsupervised else None):
                    if opt is not None:
                        for group in opt.param_groups:
                            group["lr"] = cfg.learning_rate * max(frac, 0.0)
    final = checkpoint("ckpt_final.pt")
    return final
