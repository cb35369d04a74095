import numpy as np
import pytest
import torch

from asymgan import data


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(2)


@pytest.fixture(scope="session")
def unpaired_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("unpaired")
    data.synth_multidomain(root, m=3, n_per_domain=10, size=64, seed=7)
    return root


@pytest.fixture(scope="session")
def unpaired_manifest(unpaired_root):
    return data.load_manifest(unpaired_root, data.UNPAIRED)


@pytest.fixture(scope="session")
def paired_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("paired")
    data.synth_paired(root, n=20, size=64, seed=5)
    return root


@pytest.fixture(scope="session")
def paired_manifest(paired_root):
    return data.load_manifest(paired_root, data.PAIRED)


def rand_image(shape=(1, 3, 16, 16), seed=0, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(shape, generator=gen, dtype=dtype) * 2 - 1
