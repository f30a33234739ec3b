"""
MNIST data utilities: IDX parsing, digit filtering and class-balanced subsets.
The data directory comes from --data-dir or the ENSEMBLE_VQC_DATA environment variable.
"""

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import load_dotenv

from .errors import ConfigurationError, DataFormatError, ShapeError

load_dotenv()

logger = logging.getLogger(__name__)

DATA_ENV_VAR = "ENSEMBLE_VQC_DATA"

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

PathLike = Union[str, Path]


@dataclass
class Dataset:
    images: np.ndarray  # (N, pixels), values in [0, 1]
    labels: np.ndarray  # (N, C) one-hot
    class_set: Tuple[int, ...]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.class_set = tuple(int(d) for d in self.class_set)
        if self.images.ndim != 2 or self.labels.ndim != 2:
            raise ShapeError("images and labels must be 2-D arrays")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.shape[1] != len(self.class_set):
            raise ShapeError(f"labels have {self.labels.shape[1]} classes, class set has {len(self.class_set)}")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataFormatError("image values must lie in [0, 1]")
        if self.labels.size and not (np.all(self.labels.sum(axis=1) == 1.0) and np.all(self.labels.max(axis=1) == 1.0)):
            raise DataFormatError("every label must be one-hot")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_set)

    def digits(self) -> np.ndarray:
        """The digit of every sample."""
        return np.asarray(self.class_set)[self.labels.argmax(axis=1)]


@dataclass
class MnistArchive:
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray


def resolve_data_dir(override: Optional[PathLike] = None) -> Path:
    directory = override or os.getenv(DATA_ENV_VAR)
    if not directory:
        raise ConfigurationError(
            f"Data directory not found! Pass --data-dir or set the {DATA_ENV_VAR} environment variable."
        )
    return Path(directory)


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _read_idx(path: PathLike, magic: int, ndim: int) -> np.ndarray:
    path = Path(path)
    raw = _read_bytes(path)
    header_size = 4 + 4 * ndim
    if len(raw) < header_size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")

    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise DataFormatError(f"{path}: magic number {found} (expected {magic})")

    dims = struct.unpack(f">{ndim}I", raw[4:header_size])
    expected = int(np.prod(dims))
    if len(raw) - header_size < expected:
        raise DataFormatError(f"{path}: expected {expected} data bytes, found {len(raw) - header_size}")

    logger.debug("read %s with dimensions %s", path, dims)
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header_size).reshape(dims)


def load_idx_images(path: PathLike) -> np.ndarray:
    """(count, rows, cols) unsigned bytes."""
    return _read_idx(path, IMAGE_MAGIC, 3)


def load_idx_labels(path: PathLike) -> np.ndarray:
    labels = _read_idx(path, LABEL_MAGIC, 1)
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{path}: label value {int(labels.max())} is not a digit")
    return labels


def check_pairing(images: np.ndarray, labels: np.ndarray) -> None:
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")


def _find(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise DataFormatError(f"{stem} (or {stem}.gz) not found in {directory}")


def load_mnist(directory: PathLike) -> MnistArchive:
    directory = Path(directory)
    paths = {key: _find(directory, stem) for key, stem in MNIST_FILES.items()}
    archive = MnistArchive(
        train_images=load_idx_images(paths["train_images"]),
        train_labels=load_idx_labels(paths["train_labels"]),
        test_images=load_idx_images(paths["test_images"]),
        test_labels=load_idx_labels(paths["test_labels"]),
    )
    check_pairing(archive.train_images, archive.train_labels)
    check_pairing(archive.test_images, archive.test_labels)
    logger.info("loaded MNIST from %s: %d train / %d test images",
                directory, archive.train_images.shape[0], archive.test_images.shape[0])
    return archive


def check_digits(digits: Sequence[int]) -> Tuple[int, ...]:
    digits = tuple(int(d) for d in digits)
    if not digits:
        raise ConfigurationError("digit set must not be empty")
    if len(set(digits)) != len(digits) or any(not 0 <= d <= 9 for d in digits):
        raise ConfigurationError(f"digits must be distinct values in 0-9, got {digits}")
    return digits


def one_hot(labels: np.ndarray, digits: Sequence[int]) -> np.ndarray:
    """Digit d becomes the unit vector at its position in `digits`."""
    lookup = np.full(10, -1)
    lookup[list(digits)] = np.arange(len(digits))
    positions = lookup[np.asarray(labels, dtype=np.int64)]
    if np.any(positions < 0):
        raise ConfigurationError("labels contain digits outside the digit set")
    encoded = np.zeros((positions.size, len(digits)))
    encoded[np.arange(positions.size), positions] = 1.0
    return encoded


def balanced_subset(images: np.ndarray, labels: np.ndarray, digits: Sequence[int], size: int,
                    rng: np.random.Generator) -> Dataset:
    """
    Draw `size` samples of the given digits with per-class counts differing by at most one.
    size=0 keeps every sample of the digit set.
    """
    digits = check_digits(digits)
    check_pairing(images, labels)
    if size < 0:
        raise ConfigurationError(f"subset size must be >= 0, got {size}")

    per_class = [np.flatnonzero(labels == d) for d in digits]
    if size == 0:
        chosen = np.concatenate(per_class)
    else:
        base, extra = divmod(size, len(digits))
        picks = []
        for position, (digit, indices) in enumerate(zip(digits, per_class)):
            count = base + (1 if position < extra else 0)
            if indices.size < count:
                raise ConfigurationError(f"digit {digit}: {count} samples requested, {indices.size} available")
            picks.append(rng.permutation(indices)[:count])
        chosen = np.concatenate(picks)

    order = rng.permutation(chosen)
    pixels = images[order].reshape(order.size, -1).astype(np.float64) / 255.0
    return Dataset(pixels, one_hot(labels[order], digits), digits)


def prepare(archive: MnistArchive, digits: Sequence[int], train_size: int, test_size: int,
            seed: int) -> Tuple[Dataset, Dataset]:
    """Train subset from the train partition, test subset from the test partition."""
    train_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    train = balanced_subset(archive.train_images, archive.train_labels, digits, train_size, train_rng)
    test = balanced_subset(archive.test_images, archive.test_labels, digits, test_size, test_rng)
    logger.info("prepared digits %s: %d train / %d test samples", train.class_set, len(train), len(test))
    return train, test
