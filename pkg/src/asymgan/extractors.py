"""Pluggable feature extractors for the perceptual loss and Frechet metrics.

Desk-scale stand-ins only: a degenerate identity extractor and a fixed-seed
random convolution stack.  Real pretrained backbones can be plugged in by
implementing the same ``layers`` / ``features`` surface.
"""

import torch
import torch.nn as nn


class IdentityFeatures:
    """Single layer phi(x) = x with unit weight."""

    weights = [1.0]

    def layers(self, x):
        return [x]


class RandomConvFeatures(nn.Module):
    """Frozen random two-layer conv stack with deterministic weights."""

    def __init__(self, in_channels=3, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.conv1 = nn.Conv2d(in_channels, 8, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        for conv in (self.conv1, self.conv2):
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.2)
                conv.bias.zero_()
        self.weights = [1.0, 1.0]
        self.requires_grad_(False)

    def layers(self, x):
        # cast weights to the input dtype so double-precision gradient
        # checks stay in double precision
        f1 = torch.relu(
            nn.functional.conv2d(
                x, self.conv1.weight.to(x.dtype), self.conv1.bias.to(x.dtype), stride=2, padding=1
            )
        )
        f2 = torch.relu(
            nn.functional.conv2d(
                f1, self.conv2.weight.to(x.dtype), self.conv2.bias.to(x.dtype), stride=2, padding=1
            )
        )
        return [f1, f2]

    @property
    def feature_dim(self):
        return 16

    def features(self, x):
        """Flat (batch, d) embedding for distribution-level metrics."""
        with torch.no_grad():
            f2 = self.layers(x)[-1]
            return f2.mean(dim=(2, 3))
