"""Shared fixtures: MNIST discovery and reusable synthetic datasets."""

import os

import numpy as np
import pytest

from backdoor_lab.data import synth_blobs

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist():
    """Locate the four MNIST IDX files (optionally .gz) or return None.

    Looks under $BACKDOOR_LAB_DATA, ./data and ./data/mnist.
    """
    roots = [p for p in (os.environ.get("BACKDOOR_LAB_DATA"), "data",
                         os.path.join("data", "mnist")) if p]
    for root in roots:
        found = {}
        for key, base in MNIST_FILES.items():
            for candidate in (os.path.join(root, base), os.path.join(root, base + ".gz")):
                if os.path.exists(candidate):
                    found[key] = candidate
                    break
        if len(found) == len(MNIST_FILES):
            return found
    return None


@pytest.fixture(scope="session")
def mnist_paths():
    paths = find_mnist()
    if paths is None:
        pytest.skip("MNIST IDX files not found (set BACKDOOR_LAB_DATA or place them under ./data)")
    return paths


@pytest.fixture(scope="session")
def blobs_train():
    return synth_blobs(1024, 16, 16, seed=21)


@pytest.fixture(scope="session")
def blobs_test():
    return synth_blobs(512, 16, 16, seed=22)
