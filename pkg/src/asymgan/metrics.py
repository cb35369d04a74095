"""Evaluation measures: PSNR, Frechet feature distance, inception-style
score, and the train-on-real / test-on-generated classification harness."""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import NumericError, ShapeError, ValidationError

PSNR_INF = float("inf")


def _to_array(x):
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    if hasattr(x, "data") and isinstance(x.data, torch.Tensor):
        return x.data.detach().cpu().numpy()
    return np.asarray(x)


def psnr(a, b, peak):
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    a, b = _to_array(a).astype(np.float64), _to_array(b).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValidationError("peak must be positive")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


@dataclass
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self):
        asym = np.abs(self.covariance - self.covariance.T).max()
        if asym > 1e-8:
            raise ValidationError(f"covariance not symmetric (max asymmetry {asym:.2e})")


def fit_gaussian(features):
    """Sample mean and unbiased covariance of (n, d) feature rows."""
    x = _to_array(features).astype(np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (n, d) features, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 samples, got {n}")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2
    return GaussianSummary(mean=mu, covariance=cov, count=n)


def _psd_sqrt(mat, regularize=True):
    """Matrix square root via eigendecomposition with eigenvalue clamping."""
    sym = (mat + mat.T) / 2
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError:
        if not regularize:
            raise NumericError("eigendecomposition failed")
        sym = sym + 1e-6 * np.eye(sym.shape[0])
        try:
            vals, vecs = np.linalg.eigh(sym)
        except np.linalg.LinAlgError as e:
            raise NumericError("matrix square root failed after regularization") from e
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(p, q):
    """||mu_p - mu_q||^2 + Tr(S_p + S_q - 2 (S_p S_q)^{1/2}), clamped at 0."""
    if p.mean.shape != q.mean.shape:
        raise ShapeError("summaries have different dimensionality")
    diff = p.mean - q.mean
    covmean = _psd_sqrt(p.covariance @ q.covariance)
    dist = float(diff @ diff + np.trace(p.covariance + q.covariance - 2 * covmean))
    return max(dist, 0.0)


def inception_style_score(images, classifier, splits=1):
    """exp(mean KL(p(y|x) || p(y))) per split; returns (mean, std)."""
    if splits < 1:
        raise ValidationError("splits must be >= 1")
    probs = _to_array(classifier.predict_proba(images)).astype(np.float64)
    row_sums = probs.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-4:
        raise ValidationError("classifier outputs are not normalized probability rows")
    chunks = np.array_split(probs, splits)
    scores = []
    for chunk in chunks:
        p_y = chunk.mean(axis=0, keepdims=True)
        kl = np.sum(chunk * (np.log(chunk + 1e-12) - np.log(p_y + 1e-12)), axis=1)
        scores.append(math.exp(kl.mean()))
    return float(np.mean(scores)), float(np.std(scores))


class DomainClassifier(nn.Module):
    """Small fixed-architecture CNN used by the evaluation harnesses."""

    def __init__(self, num_domains, in_channels=3):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, 16, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(32, num_domains),
        )

    def forward(self, x):
        return self.net(x)

    def predict_proba(self, images):
        if not isinstance(images, torch.Tensor):
            images = torch.as_tensor(_to_array(images), dtype=torch.float32)
        with torch.no_grad():
            return torch.softmax(self(images), dim=1)


def train_domain_classifier(images, labels, num_domains, epochs=8, lr=1e-3, seed=0, batch_size=32):
    """Fit a DomainClassifier on labeled images; single-threaded, seeded."""
    torch.manual_seed(seed)
    clf = DomainClassifier(num_domains, in_channels=images.shape[1])
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    labels = torch.as_tensor(labels, dtype=torch.long)
    n = images.shape[0]
    gen = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(clf(images[idx]), labels[idx])
            loss.backward()
            opt.step()
    clf.eval()
    return clf


def classification_accuracy(
    real_images, real_labels, generated_images, generated_labels, num_domains, epochs=8, seed=0
):
    """Train on real images, report top-1 (and top-5 when m > 5) on generated."""
    if num_domains < 2:
        raise ValidationError("need at least 2 domains")
    clf = train_domain_classifier(real_images, real_labels, num_domains, epochs=epochs, seed=seed)
    with torch.no_grad():
        logits = clf(generated_images)
    targets = torch.as_tensor(generated_labels, dtype=torch.long)
    top1 = (logits.argmax(dim=1) == targets).float().mean().item()
    report = {"top1": top1}
    if num_domains > 5:
        top5 = logits.topk(5, dim=1).indices
        report["top5"] = (top5 == targets[:, None]).any(dim=1).float().mean().item()
    return report
