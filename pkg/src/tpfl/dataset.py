"""IDX ingestion, booleanization and per-client dataset materialization."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
IMAGE_SHAPE = (28, 28)
N_PIXELS = IMAGE_SHAPE[0] * IMAGE_SHAPE[1]
DEFAULT_THRESHOLD = 75

CLASS_COUNTS = {"mnist": 10, "fashion_mnist": 10, "femnist": 62}

_GZIP_PREFIX = b"\x1f\x8b"


class IdxFormatError(ValueError):
    pass


class IdxLengthError(ValueError):
    pass


class UnsupportedShapeError(ValueError):
    pass


class UnknownClientError(KeyError):
    pass


@dataclass
class RawDataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxLengthError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        if len(self.labels) and int(self.labels.max()) >= self.class_count:
            raise ValueError(f"label {int(self.labels.max())} outside [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)


@dataclass
class SampleSet:
    """Literal vectors ``(m, 2o)`` with labels and the source index of each row."""

    literals: np.ndarray
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.labels)


@dataclass
class ClientData:
    train: SampleSet
    test: SampleSet
    conf: SampleSet


def _read(path) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == _GZIP_PREFIX:
        data = gzip.decompress(data)
    return data


def _parse_header(data, magic, n_dims, path):
    header_size = 4 + 4 * n_dims
    if len(data) < 4:
        raise IdxLengthError(f"{path}: truncated header")
    found = struct.unpack_from(">I", data)[0]
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    if len(data) < header_size:
        raise IdxLengthError(f"{path}: truncated header")
    dims = struct.unpack_from(f">{n_dims}I", data, 4)
    expected = int(np.prod(dims))
    payload = data[header_size:]
    if len(payload) < expected:
        raise IdxLengthError(f"{path}: payload has {len(payload)} bytes, header promises {expected}")
    return dims, np.frombuffer(payload, dtype=np.uint8, count=expected)


def load_idx(images_path, labels_path, class_count: int | None = None) -> RawDataset:
    """Read an IDX image/label pair (optionally gzip-compressed).

    ``class_count`` defaults to ``max(label) + 1``.
    """
    (count, rows, cols), pixels = _parse_header(_read(images_path), IMAGES_MAGIC, 3, images_path)
    if (rows, cols) != IMAGE_SHAPE:
        raise UnsupportedShapeError(f"{images_path}: images are {rows}x{cols}, only 28x28 is supported")
    (n_labels,), labels = _parse_header(_read(labels_path), LABELS_MAGIC, 1, labels_path)
    if n_labels != count:
        raise IdxLengthError(f"{images_path} holds {count} images but {labels_path} holds {n_labels} labels")
    labels = labels.astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 1
    return RawDataset(pixels.reshape(count, rows, cols), labels, class_count)


def concatenate(*datasets: RawDataset) -> RawDataset:
    return RawDataset(
        np.concatenate([d.images for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        max(d.class_count for d in datasets),
    )


def _find(directory: Path, stems):
    for stem in stems:
        for suffix in ("", ".gz"):
            matches = sorted(directory.glob(f"*{stem}{suffix}"))
            if matches:
                return matches[0]
    return None


def load_dataset(name: str, data_dir=None) -> RawDataset:
    """Load a named dataset from ``data_dir`` (or ``$TPFL_DATA_DIR``).

    Looks in ``data_dir/<name>/`` first, then ``data_dir`` itself, for the usual
    ``train-images-idx3-ubyte`` / ``t10k-...`` names; EMNIST's
    ``emnist-byclass-train-...`` / ``-test-...`` names match too. Train and
    test files are concatenated.
    """
    if name not in CLASS_COUNTS:
        raise ValueError(f"unknown dataset {name!r}; expected one of {sorted(CLASS_COUNTS)}")
    data_dir = data_dir or os.environ.get("TPFL_DATA_DIR")
    if not data_dir:
        raise FileNotFoundError("no data directory given and TPFL_DATA_DIR is unset")
    root = Path(data_dir)
    directory = root / name if (root / name).is_dir() else root
    parts = []
    for images_stems, labels_stems in (
        (["train-images-idx3-ubyte"], ["train-labels-idx1-ubyte"]),
        (["t10k-images-idx3-ubyte", "test-images-idx3-ubyte"], ["t10k-labels-idx1-ubyte", "test-labels-idx1-ubyte"]),
    ):
        images, labels = _find(directory, images_stems), _find(directory, labels_stems)
        if images and labels:
            parts.append(load_idx(images, labels, CLASS_COUNTS[name]))
    if not parts:
        raise FileNotFoundError(f"no IDX image/label files for {name!r} under {directory}")
    return concatenate(*parts)


def binarize(image, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Pixels strictly above ``threshold`` become 1; the negated half follows."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {threshold}")
    bits = (np.asarray(image, dtype=np.uint8).reshape(-1) > threshold).astype(np.uint8)
    return np.concatenate([bits, 1 - bits])


def binarize_images(images, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Batch version of :func:`binarize`, shape ``(m, 2o)``."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {threshold}")
    images = np.asarray(images, dtype=np.uint8)
    bits = (images.reshape(len(images), int(np.prod(images.shape[1:]))) > threshold).astype(np.uint8)
    return np.concatenate([bits, 1 - bits], axis=1)


class Booleanizer(TransformerMixin, BaseEstimator):
    """Threshold grayscale pixels into boolean features (without negations)."""

    def __init__(self, threshold=DEFAULT_THRESHOLD):
        self.threshold = threshold

    def fit(self, X, y=None):
        if not 0 <= self.threshold <= 255:
            raise ValueError(f"threshold must lie in [0, 255], got {self.threshold}")
        self.n_features_in_ = check_array(np.reshape(X, (len(X), -1))).shape[1]
        return self

    def transform(self, X):
        X = check_array(np.reshape(X, (len(X), -1)))
        return (X > self.threshold).astype(np.uint8)


def _sample_set(dataset: RawDataset, indices, threshold) -> SampleSet:
    indices = np.asarray(indices, dtype=np.int64)
    return SampleSet(
        binarize_images(dataset.images[indices], threshold) if len(indices)
        else np.zeros((0, 2 * int(np.prod(dataset.images.shape[1:]))), dtype=np.uint8),
        dataset.labels[indices],
        indices,
    )


def build_client_data(dataset: RawDataset, plan, client_id: int, threshold: int = DEFAULT_THRESHOLD) -> ClientData:
    try:
        assignment = plan.clients[client_id]
    except KeyError:
        raise UnknownClientError(f"client {client_id} is not in the partition plan") from None
    return ClientData(
        train=_sample_set(dataset, assignment.train, threshold),
        test=_sample_set(dataset, assignment.test, threshold),
        conf=_sample_set(dataset, assignment.conf, threshold),
    )
