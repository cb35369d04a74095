"""Core value types, dataset ingestion and synthetic corpora.

Two dataset layouts are supported:

* unpaired multi-domain: ``root/<domain_name>/*.png``
* paired skeleton:       ``root/{train,test}/images/*.png`` and
                         ``root/{train,test}/skeletons/*.png`` with matching stems

Images are exchanged between modules as ``(B, C, H, W)`` float tensors in
``[-1, 1]``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from matplotlib.colors import hsv_to_rgb
from PIL import Image, ImageDraw

from .exceptions import IngestionError, ShapeError, ValidationError

UNPAIRED = "unpaired_multidomain"
PAIRED = "paired_skeleton"

_RANGE_SLACK = 1e-6


def _as_tensor(x):
    return x.data if isinstance(x, ImageTensor) else x


@dataclass(frozen=True)
class ImageTensor:
    """Batched multi-channel raster in [-1, 1].

    ``value_range`` is the nominal dynamic range L used by SSIM-style
    metrics; 2.0 for [-1, 1] data.
    """

    data: torch.Tensor
    value_range: float = 2.0

    def __post_init__(self):
        if self.data.dim() != 4:
            raise ShapeError(f"expected (B, C, H, W), got shape {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValidationError("image tensor contains non-finite values")
        lo, hi = self.data.min().item(), self.data.max().item()
        if lo < -1.0 - _RANGE_SLACK or hi > 1.0 + _RANGE_SLACK:
            raise ValidationError(f"values outside [-1, 1]: min={lo:.4g}, max={hi:.4g}")

    @property
    def shape(self):
        return tuple(self.data.shape)


@dataclass(frozen=True)
class DomainLabel:
    """Categorical domain identity, one-hot encoded."""

    index: int
    num_domains: int

    def __post_init__(self):
        if not 0 <= self.index < self.num_domains:
            raise ValidationError(f"index {self.index} outside [0, {self.num_domains})")

    @property
    def one_hot(self):
        v = torch.zeros(self.num_domains)
        v[self.index] = 1.0
        return v


@dataclass(frozen=True)
class SkeletonMap:
    """Rendered skeleton raster (C, H, W) in [-1, 1], spatially matching its image."""

    data: torch.Tensor

    def __post_init__(self):
        if self.data.dim() != 3:
            raise ShapeError(f"expected (C, H, W), got shape {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValidationError("skeleton map contains non-finite values")


@dataclass
class DatasetManifest:
    root: Path
    mode: str
    domains: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    image_size: int = 0

    @property
    def num_domains(self):
        return len(self.domains)

    def to_json(self):
        return json.dumps(
            {
                "mode": self.mode,
                "domains": self.domains,
                "samples": self.samples,
                "image_size": self.image_size,
            },
            indent=2,
        )

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text, root):
        d = json.loads(text)
        return cls(
            root=Path(root),
            mode=d["mode"],
            domains=d["domains"],
            samples=d["samples"],
            image_size=d["image_size"],
        )


def load_manifest(root, mode):
    """Scan ``root`` and build a manifest for the given dataset mode."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root not found: {root}")
    if mode == UNPAIRED:
        return _load_unpaired(root)
    if mode == PAIRED:
        return _load_paired(root)
    raise ValidationError(f"unknown dataset mode: {mode!r}")


def _image_size_of(path):
    with Image.open(path) as im:
        return im.size[0]


def _load_unpaired(root):
    domains = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(domains) < 2:
        raise ValidationError(f"unpaired mode needs >= 2 domain directories, found {len(domains)}")
    samples = []
    for name in domains:
        files = sorted((root / name).glob("*.png"))
        if not files:
            raise ValidationError(f"domain directory {name!r} contains no png files")
        samples.extend({"path": str(f.relative_to(root)), "domain": name} for f in files)
    size = _image_size_of(root / samples[0]["path"])
    return DatasetManifest(root=root, mode=UNPAIRED, domains=domains, samples=samples, image_size=size)


def _load_paired(root):
    samples = []
    for split in ("train", "test"):
        img_dir = root / split / "images"
        skel_dir = root / split / "skeletons"
        if not img_dir.is_dir():
            if split == "test":
                continue
            raise IngestionError(f"missing directory: {img_dir}")
        for img in sorted(img_dir.glob("*.png")):
            skel = skel_dir / img.name
            if not skel.exists():
                raise ValidationError(f"image lacks skeleton: {img.name}")
            samples.append(
                {
                    "image": str(img.relative_to(root)),
                    "skeleton": str(skel.relative_to(root)),
                    "split": split,
                }
            )
    if not samples:
        raise ValidationError("paired dataset contains no samples")
    size = _image_size_of(root / samples[0]["image"])
    return DatasetManifest(root=root, mode=PAIRED, domains=[], samples=samples, image_size=size)


def normalize(raw):
    """Map a 0..255 raster to an ImageTensor in [-1, 1].

    Accepts (H, W, C) or (B, H, W, C) arrays; returns (B, C, H, W).
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"expected (H, W, C) or (B, H, W, C), got shape {arr.shape}")
    t = torch.from_numpy(arr / 127.5 - 1.0).permute(0, 3, 1, 2).to(torch.float32)
    return ImageTensor(t.clamp(-1.0, 1.0))


def denormalize(img):
    """Inverse of :func:`normalize`; returns a uint8 (B, H, W, C) array."""
    t = _as_tensor(img)
    arr = ((t.detach().permute(0, 2, 3, 1).cpu().numpy() + 1.0) * 127.5)
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def channel_split(x):
    """Split a 3-channel tensor into its (R, G, B) single-channel views."""
    t = _as_tensor(x)
    if t.shape[1] != 3:
        raise ShapeError(f"channel_split needs 3 channels, got {t.shape[1]}")
    return tuple(t[:, i : i + 1] for i in range(3))


def load_image(path, size=None):
    """Load one PNG as a (1, C, H, W) tensor in [-1, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        return normalize(np.asarray(im)).data


def load_unpaired_arrays(manifest):
    """Preload all images of an unpaired manifest, keyed by domain name."""
    out = {}
    for name in manifest.domains:
        paths = [s["path"] for s in manifest.samples if s["domain"] == name]
        out[name] = torch.cat(
            [load_image(manifest.root / p, manifest.image_size) for p in paths]
        )
    return out


def load_paired_arrays(manifest, split="train"):
    """Preload (images, skeletons) tensors for one split of a paired manifest."""
    samples = [s for s in manifest.samples if s["split"] == split]
    imgs = torch.cat([load_image(manifest.root / s["image"], manifest.image_size) for s in samples])
    skels = torch.cat(
        [load_image(manifest.root / s["skeleton"], manifest.image_size) for s in samples]
    )
    return imgs, skels


# ---------------------------------------------------------------------------
# synthetic corpora


def _render_hue_scene(rng, size):
    """Random shape scene whose hues concentrate near 0 degrees, as HSV arrays."""
    yy, xx = np.mgrid[0:size, 0:size]
    h = np.full((size, size), rng.normal(0.0, 0.008) % 1.0)
    s = np.full((size, size), 0.65 + 0.1 * rng.random())
    v = np.full((size, size), 0.30 + 0.15 * rng.random())
    for _ in range(int(rng.integers(4, 8))):
        cx, cy = rng.uniform(0, size, 2)
        r = rng.uniform(size * 0.08, size * 0.28)
        if rng.random() < 0.5:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        else:
            mask = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r * rng.uniform(0.4, 1.0))
        h[mask] = rng.normal(0.0, 0.015) % 1.0
        s[mask] = 0.85 + 0.12 * rng.random()
        v[mask] = 0.55 + 0.4 * rng.random()
    return h, s, v


def synth_multidomain(root, m, n_per_domain, size, seed):
    """Write a procedural multi-domain dataset under ``root``.

    Domain ``k`` applies a hue rotation of ``k * (360 / m)`` degrees to random
    shape scenes; output is byte-reproducible from ``seed``.
    """
    if m < 2:
        raise ValidationError(f"need at least 2 domains, got {m}")
    if size < 32:
        raise ValidationError(f"size must be >= 32, got {size}")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IngestionError(f"cannot create dataset root {root}: {e}") from e
    for k in range(m):
        ddir = root / f"domain{k}"
        ddir.mkdir(exist_ok=True)
        for i in range(n_per_domain):
            rng = np.random.default_rng([seed, k, i])
            h, s, v = _render_hue_scene(rng, size)
            h = (h + k / m) % 1.0
            rgb = hsv_to_rgb(np.stack([h, s, v], axis=-1))
            arr = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr).save(ddir / f"img_{i:04d}.png")
    manifest = load_manifest(root, UNPAIRED)
    manifest.save(root / "manifest.json")
    return manifest


# segment palette for the paired corpus: one fixed color per limb
_LIMB_COLORS = [(230, 70, 70), (70, 200, 90), (80, 110, 235), (235, 200, 60), (200, 80, 220)]


def _pose_points(rng, size):
    cx, cy = size / 2, size / 2
    pts = []
    for j in range(len(_LIMB_COLORS)):
        ang = 2 * np.pi * j / len(_LIMB_COLORS) + rng.normal(0, 0.45)
        length = size * rng.uniform(0.18, 0.4)
        pts.append((cx + length * np.cos(ang), cy + length * np.sin(ang)))
    return (cx, cy), pts


def _render_pair(rng, size):
    center, pts = _pose_points(rng, size)
    skel = Image.new("RGB", (size, size), (0, 0, 0))
    img = Image.new("RGB", (size, size), (40, 40, 48))
    ds, di = ImageDraw.Draw(skel), ImageDraw.Draw(img)
    for color, p in zip(_LIMB_COLORS, pts):
        ds.line([center, p], fill=(255, 255, 255), width=max(1, size // 48))
        di.line([center, p], fill=color, width=max(2, size // 16))
    r = max(2, size // 20)
    di.ellipse([center[0] - r, center[1] - r, center[0] + r, center[1] + r], fill=(240, 230, 220))
    return np.asarray(img), np.asarray(skel)


def synth_paired(root, n, size, seed, test_fraction=0.2):
    """Write a procedural paired image/skeleton dataset under ``root``."""
    if size < 32:
        raise ValidationError(f"size must be >= 32, got {size}")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IngestionError(f"cannot create dataset root {root}: {e}") from e
    n_test = max(1, int(n * test_fraction)) if n > 1 else 0
    for i in range(n):
        split = "test" if i >= n - n_test else "train"
        img_dir = root / split / "images"
        skel_dir = root / split / "skeletons"
        img_dir.mkdir(parents=True, exist_ok=True)
        skel_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng([seed, i])
        img, skel = _render_pair(rng, size)
        Image.fromarray(img).save(img_dir / f"sample_{i:04d}.png")
        Image.fromarray(skel).save(skel_dir / f"sample_{i:04d}.png")
    manifest = load_manifest(root, PAIRED)
    manifest.save(root / "manifest.json")
    return manifest
