import colorsys
import math

import numpy as np
import pytest
import torch
from PIL import Image

from asymgan import data
from asymgan.exceptions import IngestionError, ShapeError, ValidationError


class TestNormalize:
    def test_range_endpoints(self):
        raw = np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
        img = data.normalize(raw)
        assert img.data[0, :, 0, 0].tolist() == [-1.0, -1.0, -1.0]
        assert img.data[0, :, 0, 1].tolist() == [1.0, 1.0, 1.0]

    def test_midpoint(self):
        raw = np.full((2, 2, 3), 127, dtype=np.uint8)
        img = data.normalize(raw)
        assert img.data.min().item() == pytest.approx(127 / 127.5 - 1, abs=1e-7)

    def test_round_trip_all_levels(self):
        raw = np.arange(256, dtype=np.uint8).reshape(1, 16, 16, 1).repeat(3, axis=-1)
        back = data.denormalize(data.normalize(raw))
        assert np.abs(back.astype(int) - raw.astype(int)).max() <= 1

    def test_bad_rank(self):
        with pytest.raises(ShapeError):
            data.normalize(np.zeros((4, 4)))


class TestChannelSplit:
    def test_constant_channels(self):
        x = torch.zeros(1, 3, 4, 4)
        x[:, 0], x[:, 1], x[:, 2] = 0.1, 0.2, 0.3
        r, g, b = data.channel_split(x)
        assert torch.all(r == 0.1) and torch.all(g == 0.2) and torch.all(b == 0.3)
        assert r.shape == (1, 1, 4, 4)

    def test_round_trip(self):
        x = torch.rand(2, 3, 8, 8) * 2 - 1
        assert torch.equal(torch.cat(data.channel_split(x), dim=1), x)

    def test_wrong_channel_count(self):
        with pytest.raises(ShapeError):
            data.channel_split(torch.zeros(1, 1, 4, 4))


class TestValueTypes:
    def test_image_tensor_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            data.ImageTensor(torch.full((1, 3, 4, 4), 1.5))

    def test_image_tensor_rejects_nan(self):
        t = torch.zeros(1, 3, 4, 4)
        t[0, 0, 0, 0] = float("nan")
        with pytest.raises(ValidationError):
            data.ImageTensor(t)

    def test_domain_label_one_hot(self):
        z = data.DomainLabel(2, 4)
        assert z.one_hot.tolist() == [0, 0, 1, 0]

    def test_domain_label_bad_index(self):
        with pytest.raises(ValidationError):
            data.DomainLabel(4, 4)


class TestManifest:
    def test_minimal_two_domain_layout(self, tmp_path):
        for name in ("summer", "winter"):
            d = tmp_path / name
            d.mkdir()
            Image.new("RGB", (32, 32)).save(d / "a.png")
        manifest = data.load_manifest(tmp_path, data.UNPAIRED)
        assert manifest.num_domains == 2
        assert manifest.domains == ["summer", "winter"]

    def test_four_season_layout(self, tmp_path):
        for name in ("spring", "summer", "autumn", "winter"):
            d = tmp_path / name
            d.mkdir()
            Image.new("RGB", (32, 32)).save(d / "a.png")
        assert data.load_manifest(tmp_path, data.UNPAIRED).num_domains == 4

    def test_missing_root(self, tmp_path):
        with pytest.raises(IngestionError):
            data.load_manifest(tmp_path / "nope", data.UNPAIRED)

    def test_single_domain_rejected(self, tmp_path):
        (tmp_path / "only").mkdir()
        Image.new("RGB", (32, 32)).save(tmp_path / "only" / "a.png")
        with pytest.raises(ValidationError):
            data.load_manifest(tmp_path, data.UNPAIRED)

    def test_paired_missing_skeleton_named(self, tmp_path):
        (tmp_path / "train" / "images").mkdir(parents=True)
        (tmp_path / "train" / "skeletons").mkdir(parents=True)
        Image.new("RGB", (32, 32)).save(tmp_path / "train" / "images" / "img_007.png")
        with pytest.raises(ValidationError, match="img_007.png"):
            data.load_manifest(tmp_path, data.PAIRED)

    def test_json_round_trip(self, unpaired_manifest):
        clone = data.DatasetManifest.from_json(unpaired_manifest.to_json(), unpaired_manifest.root)
        assert clone.domains == unpaired_manifest.domains
        assert clone.samples == unpaired_manifest.samples
        assert clone.image_size == unpaired_manifest.image_size


def _mean_hue_degrees(path):
    """Circular mean hue of saturated pixels, computed pixel-by-pixel."""
    arr = np.asarray(Image.open(path)).astype(np.float64) / 255.0
    sins, coss = [], []
    for row in arr.reshape(-1, 3)[::7]:
        h, s, _ = colorsys.rgb_to_hsv(*row)
        if s > 0.3:
            sins.append(math.sin(2 * math.pi * h))
            coss.append(math.cos(2 * math.pi * h))
    return math.degrees(math.atan2(np.mean(sins), np.mean(coss))) % 360


class TestSynthMultidomain:
    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        data.synth_multidomain(a, 3, 4, 64, seed=7)
        data.synth_multidomain(b, 3, 4, 64, seed=7)
        for fa in sorted(a.rglob("*.png")):
            fb = b / fa.relative_to(a)
            assert fa.read_bytes() == fb.read_bytes()

    def test_domain_zero_hue(self, unpaired_root):
        for f in sorted((unpaired_root / "domain0").glob("*.png"))[:5]:
            hue = _mean_hue_degrees(f)
            assert hue <= 10 or hue >= 350

    def test_rotated_domain_hue(self, unpaired_root):
        for f in sorted((unpaired_root / "domain1").glob("*.png"))[:5]:
            assert abs(_mean_hue_degrees(f) - 120) <= 10

    def test_single_domain_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            data.synth_multidomain(tmp_path / "x", 1, 4, 64, seed=0)

    def test_small_size_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            data.synth_multidomain(tmp_path / "x", 2, 4, 16, seed=0)


class TestSynthPaired:
    def test_layout_and_manifest(self, paired_manifest):
        assert paired_manifest.mode == data.PAIRED
        splits = {s["split"] for s in paired_manifest.samples}
        assert splits == {"train", "test"}

    def test_loadable_pairs(self, paired_manifest):
        imgs, skels = data.load_paired_arrays(paired_manifest, "train")
        assert imgs.shape == skels.shape
        assert imgs.shape[1:] == (3, 64, 64)
        assert imgs.min() >= -1 and imgs.max() <= 1
