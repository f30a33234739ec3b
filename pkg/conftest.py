"""
Shared pytest configuration: repository root on sys.path, the --runslow switch and synthetic data fixtures.
"""

import gzip
import os
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent
sys.path.insert(0, str(ROOT))

from utils.data import DATA_ENV_VAR, MNIST_FILES, Dataset, one_hot  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def write_idx(path: Path, array: np.ndarray, magic: int, compress: bool = False) -> Path:
    """Big-endian IDX file: magic, one uint32 per dimension, then unsigned bytes."""
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    payload += np.asarray(array, dtype=np.uint8).tobytes()
    if compress:
        path = path.with_name(path.name + ".gz")
        with gzip.open(path, "wb") as f:
            f.write(payload)
    else:
        path.write_bytes(payload)
    return path


def synthetic_digits(count: int, rng: np.random.Generator, side: int = 28):
    """
    Images whose bright band position depends on the digit, so a small model can separate them.
    Labels cycle through 0-9.
    """
    labels = np.arange(count) % 10
    images = rng.integers(0, 40, size=(count, side, side)).astype(np.uint8)
    for i, digit in enumerate(labels):
        row = 2 + 2 * digit
        images[i, row:row + 2, :] = 255
    return images, labels.astype(np.uint8)


@pytest.fixture
def mnist_dir(tmp_path):
    """A directory holding the four standard IDX files with synthetic content."""
    rng = np.random.default_rng(1234)
    train_images, train_labels = synthetic_digits(200, rng)
    test_images, test_labels = synthetic_digits(60, rng)
    write_idx(tmp_path / MNIST_FILES["train_images"], train_images, 0x803)
    write_idx(tmp_path / MNIST_FILES["train_labels"], train_labels, 0x801)
    write_idx(tmp_path / MNIST_FILES["test_images"], test_images, 0x803, compress=True)
    write_idx(tmp_path / MNIST_FILES["test_labels"], test_labels, 0x801, compress=True)
    return tmp_path


@pytest.fixture
def tiny_dataset():
    """Eight 16-pixel samples of two separable classes."""
    rng = np.random.default_rng(7)
    labels = np.array([0, 1] * 4)
    images = rng.uniform(0.0, 0.2, size=(8, 16))
    images[labels == 1, 8:] += 0.7
    return Dataset(images, one_hot(labels, (0, 1)), (0, 1))


@pytest.fixture
def real_mnist_dir():
    """The real MNIST directory from the environment, or skip."""
    directory = os.getenv(DATA_ENV_VAR)
    if not directory or not all(
        (Path(directory) / stem).exists() or (Path(directory) / f"{stem}.gz").exists()
        for stem in MNIST_FILES.values()
    ):
        pytest.skip(f"MNIST IDX files not available in ${DATA_ENV_VAR}")
    return Path(directory)
