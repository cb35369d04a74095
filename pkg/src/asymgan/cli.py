"""Command-line surface tying the pipeline together.

Commands: synth-data, train, translate, evaluate, inspect, gradcheck.
All commands read an optional JSON config; explicit flags win over config
values.  Exit codes: 2 for argument errors, 1 for runtime errors.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import data, gradcheck, metrics, report
from .data import PAIRED, UNPAIRED, DomainLabel, DatasetManifest, load_manifest
from .discriminators import (
    MULTIDOMAIN,
    TRIPLET,
    DiscriminatorSpec,
    build_discriminator,
    receptive_field,
)
from .exceptions import ValidationError
from .extractors import RandomConvFeatures
from .generators import (
    ArchTier,
    GeneratorPairSpec,
    GuidanceSpec,
    build_pair,
    count_parameters,
    restore_pair,
)
from .losses import SupervisedWeights, UnsupervisedWeights
from .training import TrainConfig, train_loop

_TIER_NAMES = {"tier_i", "tier_ii", "tier_iii"}


def parse_arch(text):
    """Parse 'tier_i' / 'tier_ii' / 'tier_iii' / 'resnet9:<width>'."""
    if text in _TIER_NAMES:
        return ArchTier(text)
    if text.startswith("resnet9"):
        _, _, width = text.partition(":")
        return ArchTier("resnet9", int(width) if width else 64)
    raise ValidationError(f"unknown architecture {text!r}")


def load_config(path):
    return json.loads(Path(path).read_text()) if path else {}


def _merged(config, args, key, default=None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(key, default)


def _find_manifest(root, mode):
    root = Path(root)
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        return DatasetManifest.from_json(manifest_path.read_text(), root)
    return load_manifest(root, mode)


def _pair_spec(config, mode, num_domains):
    if mode == UNPAIRED:
        guidance = GuidanceSpec(kind="domain_label", num_domains=num_domains)
        default_t, default_r = "tier_iii", "tier_i"
    else:
        guidance = GuidanceSpec(kind="skeleton")
        default_t, default_r = "resnet9:64", "resnet9:4"
    return GeneratorPairSpec(
        translate_arch=parse_arch(config.get("translate_arch", default_t)),
        reconstruct_arch=parse_arch(config.get("reconstruct_arch", default_r)),
        sharing=config.get("sharing", "none"),
        guidance=guidance,
    )


def _train_config(config, args, mode):
    weights_cfg = config.get("loss_weights", {})
    if mode == UNPAIRED:
        weights = UnsupervisedWeights(**weights_cfg)
        defaults = {"batch_size": 1, "epochs": 200}
    else:
        weights = SupervisedWeights(**weights_cfg)
        defaults = {"batch_size": 4, "epochs": 20}
    fields = (
        "learning_rate adam_beta1 adam_beta2 batch_size epochs buffer_capacity "
        "dual_discriminator seed lr_decay checkpoint_every max_steps"
    ).split()
    kwargs = {f: config[f] for f in fields if f in config}
    for f, v in defaults.items():
        kwargs.setdefault(f, v)
    if args.epochs is not None:
        kwargs["epochs"] = args.epochs
    if args.seed is not None:
        kwargs["seed"] = args.seed
    kwargs["loss_weights"] = weights
    return TrainConfig(**kwargs)


def cmd_synth_data(args):
    config = load_config(args.config)
    mode = _merged(config, args, "mode", "unpaired")
    out = Path(args.out)
    if mode == "unpaired":
        manifest = data.synth_multidomain(
            out, args.domains, args.per_domain, args.size, args.seed or 0
        )
        print(f"wrote {len(manifest.samples)} images in {manifest.num_domains} domains to {out}")
    else:
        manifest = data.synth_paired(out, args.pairs, args.size, args.seed or 0)
        print(f"wrote {len(manifest.samples)} image/skeleton pairs to {out}")
    return 0


def cmd_train(args):
    config = load_config(args.config)
    mode = UNPAIRED if _merged(config, args, "mode", "unpaired") == "unpaired" else PAIRED
    manifest = _find_manifest(args.data, mode)
    spec = _pair_spec(config, mode, manifest.num_domains)
    cfg = _train_config(config, args, mode)
    out = Path(args.out)
    final = train_loop(manifest, spec, cfg, out)
    report.plot_loss_curves(out / "train_log.jsonl", out / "loss_curves.png")
    print(f"final checkpoint: {final}")
    return 0


def cmd_translate(args):
    spec, gt, gr, payload = restore_pair(args.checkpoint)
    extra = payload["extra"]
    domains = extra.get("domains", [])
    size = extra.get("image_size", 64)
    manifest = _find_manifest(args.data, UNPAIRED)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.target_domain is not None and args.target_domain not in domains:
        raise ValidationError(f"unknown target domain {args.target_domain!r}; have {domains}")
    targets = [args.target_domain] if args.target_domain else domains

    rng = np.random.default_rng(args.seed or 0)
    picks = rng.choice(len(manifest.samples), size=min(args.num_samples, len(manifest.samples)),
                       replace=False)
    rows, titles = [], None
    gt.eval(), gr.eval()
    with torch.no_grad():
        for i in picks:
            sample = manifest.samples[int(i)]
            x = data.load_image(manifest.root / sample["path"], size)
            src = DomainLabel(domains.index(sample["domain"]), len(domains))
            row = [x]
            names = ["input"]
            last_fake = None
            for name in targets:
                z_y = DomainLabel(domains.index(name), len(domains))
                fake = gt(x, z_y)
                report.save_png(fake, out / f"{Path(sample['path']).stem}_to_{name}.png")
                row.append(fake)
                names.append(f"-> {name}")
                last_fake = fake
            row.append(gr(last_fake, src))
            names.append("reconstruction")
            rows.append(row)
            titles = names
    report.save_grid(rows, titles, out / "grid.png", title="translations")
    print(f"wrote {len(rows) * len(targets)} translations and grid to {out}")
    return 0


def _evaluate_unpaired(manifest, gt, gr, domains, size, num_samples, seed, out):
    m = len(domains)
    rng = np.random.default_rng(seed)
    arrays = data.load_unpaired_arrays(manifest)
    real_images = torch.cat([arrays[d] for d in domains])
    real_labels = np.concatenate([[k] * arrays[d].shape[0] for k, d in enumerate(domains)])

    fakes, fake_labels, cycle_psnrs = [], [], []
    gt.eval(), gr.eval()
    with torch.no_grad():
        for _ in range(num_samples):
            src = int(rng.integers(m))
            dst = int(rng.choice([k for k in range(m) if k != src]))
            pool = arrays[domains[src]]
            x = pool[int(rng.integers(pool.shape[0]))][None]
            fake = gt(x, DomainLabel(dst, m))
            recon = gr(fake, DomainLabel(src, m))
            fakes.append(fake)
            fake_labels.append(dst)
            cycle_psnrs.append(metrics.psnr(recon, x, peak=2.0))
    fakes = torch.cat(fakes)

    extractor = RandomConvFeatures(seed=0)
    frechet = metrics.frechet_distance(
        metrics.fit_gaussian(extractor.features(real_images)),
        metrics.fit_gaussian(extractor.features(fakes)),
    )
    clf = metrics.train_domain_classifier(real_images, real_labels, m, seed=seed)
    is_mean, is_std = metrics.inception_style_score(fakes, clf, splits=2)
    acc = metrics.classification_accuracy(
        real_images, real_labels, fakes, fake_labels, m, seed=seed
    )
    out_report = {
        "mode": "unpaired",
        "extractor": "random-conv-16d",
        "num_real": int(real_images.shape[0]),
        "num_generated": int(fakes.shape[0]),
        "cycle_psnr_db": float(np.mean([p for p in cycle_psnrs if np.isfinite(p)])),
        "frechet_feature_distance": frechet,
        "inception_style_score_mean": is_mean,
        "inception_style_score_std": is_std,
        "classification_top1": acc["top1"],
    }
    if "top5" in acc:
        out_report["classification_top5"] = acc["top5"]
    return out_report


def _evaluate_paired(manifest, gt, size, num_samples, out):
    images, skeletons = data.load_paired_arrays(manifest, "test")
    n = min(num_samples, images.shape[0])
    gt.eval()
    psnrs, fakes = [], []
    with torch.no_grad():
        for i in range(n):
            # translate sample i onto the next sample's skeleton
            j = (i + 1) % images.shape[0]
            fake = gt(images[i][None], skeletons[j][None])
            psnrs.append(metrics.psnr(fake, images[j][None], peak=2.0))
            fakes.append(fake)
    fakes = torch.cat(fakes)
    extractor = RandomConvFeatures(seed=0)
    frechet = metrics.frechet_distance(
        metrics.fit_gaussian(extractor.features(images)),
        metrics.fit_gaussian(extractor.features(fakes)),
    )
    return {
        "mode": "paired",
        "extractor": "random-conv-16d",
        "num_real": int(images.shape[0]),
        "num_generated": n,
        "psnr_db": float(np.mean([p for p in psnrs if np.isfinite(p)])),
        "frechet_feature_distance": frechet,
    }


def cmd_evaluate(args):
    spec, gt, gr, payload = restore_pair(args.checkpoint)
    extra = payload["extra"]
    size = extra.get("image_size", 64)
    out = Path(args.out)
    if extra.get("mode", UNPAIRED) == UNPAIRED:
        manifest = _find_manifest(args.data, UNPAIRED)
        result = _evaluate_unpaired(
            manifest, gt, gr, extra["domains"], size, args.num_samples, args.seed or 0, out
        )
    else:
        manifest = _find_manifest(args.data, PAIRED)
        result = _evaluate_paired(manifest, gt, size, args.num_samples, out)
    path = report.write_metrics(result, out)
    print(json.dumps(result, indent=2))
    print(f"report written to {path}")
    return 0


def cmd_inspect(args):
    config = load_config(args.config)
    mode = UNPAIRED if _merged(config, args, "mode", "unpaired") == "unpaired" else PAIRED
    m = config.get("num_domains", 3)
    size = config.get("image_size", 64)
    spec = _pair_spec(config, mode, m)
    gt, gr = build_pair(spec, image_size=size)
    n_gt, n_gr = count_parameters(gt), count_parameters(gr)
    if mode == UNPAIRED:
        dspec = DiscriminatorSpec(kind=MULTIDOMAIN, num_domains=m)
    else:
        dspec = DiscriminatorSpec(kind=TRIPLET)
    disc = build_discriminator(dspec, size)
    print(f"sharing mode:            {spec.sharing}")
    print(f"translation generator:   {spec.translate_arch.kind:10s} {n_gt:>12,d} params")
    print(f"reconstruction generator:{spec.reconstruct_arch.kind:>10s} {n_gr:>12,d} params")
    print(f"pair total (shared once):{'':10s} {count_parameters(gt, gr):>12,d} params")
    print(f"discriminator:           {dspec.kind:10s} {count_parameters(disc):>12,d} params "
          f"(receptive field {receptive_field(dspec)})")
    return 0


def cmd_gradcheck(args):
    results = gradcheck.run_suite(seed=args.seed or 0)
    ok = True
    for name, err in sorted(results.items()):
        status = "ok" if err < 1e-3 else "FAIL"
        print(f"{name:16s} max relative error {err:.3e}  [{status}]")
        ok = ok and err < 1e-3
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="asymgan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("synth-data", help="write a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["unpaired", "paired"])
    p.add_argument("--domains", type=int, default=3)
    p.add_argument("--per-domain", type=int, default=20)
    p.add_argument("--pairs", type=int, default=40)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="run the training loop")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["unpaired", "paired"])
    p.add_argument("--epochs", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("translate", help="translate images with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-domain")
    p.add_argument("--num-samples", type=int, default=4)
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("evaluate", help="compute the metrics report")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-samples", type=int, default=64)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("inspect", help="print parameter counts and sharing mode")
    common(p)
    p.add_argument("--mode", choices=["unpaired", "paired"])
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference check of all losses")
    common(p)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # one-line diagnostic, exit 1
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
