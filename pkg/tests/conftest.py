import os
from pathlib import Path

import numpy as np
import pytest

from tpfl.dataset import load_dataset

_CANDIDATES = [
    os.environ.get("TPFL_DATA_DIR"),
    str(Path(__file__).resolve().parents[1] / "data"),
    str(Path.home() / "data"),
]


def mnist_dir():
    for candidate in filter(None, _CANDIDATES):
        for d in (Path(candidate) / "mnist", Path(candidate)):
            if any(d.glob("train-images-idx3-ubyte*")):
                return d
    return None


@pytest.fixture(scope="session")
def mnist():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set TPFL_DATA_DIR")
    return load_dataset("mnist", d)


@pytest.fixture(scope="session")
def mnist_train_only():
    from tpfl.dataset import load_idx

    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set TPFL_DATA_DIR")
    return load_idx(next(d.glob("train-images-idx3-ubyte*")), next(d.glob("train-labels-idx1-ubyte*")))


def write_idx(directory, images, labels, prefix="train", gz=False):
    """Write an IDX image/label pair; returns the two paths."""
    import gzip
    import struct

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img = struct.pack(">IIII", 0x803, len(images), *images.shape[1:]) + images.tobytes()
    lab = struct.pack(">II", 0x801, len(labels)) + labels.tobytes()
    stem = "t10k" if prefix == "test" else prefix
    paths = []
    for name, blob in ((f"{stem}-images-idx3-ubyte", img), (f"{stem}-labels-idx1-ubyte", lab)):
        if gz:
            name, blob = name + ".gz", gzip.compress(blob)
        (directory / name).write_bytes(blob)
        paths.append(directory / name)
    return paths


def synthetic_digits(n, class_count=10, seed=0):
    """28x28 images where class c lights up its own horizontal band, plus noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, class_count, n)
    images = (rng.random((n, 28, 28)) < 0.05).astype(np.uint8) * 200
    for i, c in enumerate(labels):
        row = 1 + (c * 26) // class_count
        images[i, row:row + 2, 4:24] = 255
    return images, labels


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
