"""Asymmetric dual-generator GAN for multi-domain and skeleton-conditioned
image-to-image translation, with its loss suite, training protocol and
evaluation metrics."""

__version__ = "0.1.0"

from .data import DomainLabel, ImageTensor, SkeletonMap, load_manifest  # noqa: F401
from .generators import GeneratorPairSpec, GuidanceSpec, build_pair  # noqa: F401
from .losses import SupervisedWeights, UnsupervisedWeights  # noqa: F401
from .training import TrainConfig, train_loop  # noqa: F401
