"""Dataset containers, the synthetic image generator, and IDX-backed loading.

Real image/label files in the big-endian IDX layout are used when available;
the synthetic generator below produces a deterministic stand-in with the same
shape (uint8 images, ten classes) for offline runs.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass

import numpy as np

from .dataio import parse_idx, read_idx, write_idx

MNIST_DIR_ENV = "LAWQ_MNIST_DIR"
_IDX_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray | None = None
    y_val: np.ndarray | None = None
    x_test: np.ndarray | None = None
    y_test: np.ndarray | None = None


def split_train_val(x, y, fraction: float, seed: int):
    """Seeded 90/10-style split; returns (x_train, y_train, x_val, y_val)."""
    n = x.shape[0]
    n_val = int(round(n * fraction))
    order = np.random.default_rng([seed, 2]).permutation(n)
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    return x[train_idx], y[train_idx], x[val_idx], y[val_idx]


def images_to_features(images: np.ndarray) -> np.ndarray:
    """Flatten uint8 images to float64 rows scaled into [0, 1]."""
    flat = images.reshape(images.shape[0], -1).astype(np.float64)
    return flat / 255.0


def load_idx_pair(images_path: str, labels_path: str, limit: int | None = None):
    """Read an images/labels IDX file pair (gzip transparently handled)."""
    def read(path):
        if str(path).endswith(".gz"):
            with gzip.open(path, "rb") as fh:
                return parse_idx(fh.read())
        return read_idx(path)

    images = read(images_path)
    labels = read(labels_path)
    x = images_to_features(images.to_array())
    y = labels.to_array().astype(np.int64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("image and label counts differ")
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return x, y


def find_mnist_dir() -> str | None:
    """Directory holding the four standard IDX files, if one is configured."""
    candidates = []
    env = os.environ.get(MNIST_DIR_ENV)
    if env:
        candidates.append(env)
    candidates.append(os.path.join(os.getcwd(), "data", "mnist"))
    for base in candidates:
        if not os.path.isdir(base):
            continue
        if all(
            os.path.exists(os.path.join(base, name))
            or os.path.exists(os.path.join(base, name + ".gz"))
            for name in _IDX_NAMES.values()
        ):
            return base
    return None


def load_mnist(base: str, n_train: int | None = None, n_test: int | None = None) -> Dataset:
    def path(key):
        raw = os.path.join(base, _IDX_NAMES[key])
        return raw if os.path.exists(raw) else raw + ".gz"

    x_train, y_train = load_idx_pair(path("train_images"), path("train_labels"), n_train)
    x_test, y_test = load_idx_pair(path("test_images"), path("test_labels"), n_test)
    return Dataset(x_train, y_train, x_test=x_test, y_test=y_test)


# ---------------------------------------------------------------------------
# Synthetic image classes
# ---------------------------------------------------------------------------

def _blur(img: np.ndarray, passes: int = 3) -> np.ndarray:
    """Cheap separable box blur, reflect padding."""
    out = img
    for _ in range(passes):
        padded = np.pad(out, 2, mode="reflect")
        acc = np.zeros_like(out)
        for dx in range(-2, 3):
            for dy in range(-2, 3):
                acc += padded[2 + dx:2 + dx + out.shape[0], 2 + dy:2 + dy + out.shape[1]]
        out = acc / 25.0
    return out


def synthetic_images(n_train: int, n_test: int, seed: int, classes: int = 10,
                     side: int = 28, noise: float = 0.55, max_shift: int = 3):
    """Deterministic image-classification stand-in.

    Each class is a smoothed random template; samples are randomly shifted
    copies with pixel noise, quantized to uint8.  Returns
    ``(train_images, train_labels, test_images, test_labels)``.
    """
    rng = np.random.default_rng([seed, 7])
    templates = []
    for _ in range(classes):
        t = _blur(rng.normal(0.0, 1.0, (side, side)))
        t = (t - t.min()) / (t.max() - t.min() + 1e-12)
        templates.append(t)

    def batch(n):
        labels = rng.integers(0, classes, n).astype(np.uint8)
        images = np.empty((n, side, side), dtype=np.uint8)
        for i, c in enumerate(labels):
            img = templates[c]
            dx, dy = rng.integers(-max_shift, max_shift + 1, 2)
            img = np.roll(np.roll(img, dx, axis=0), dy, axis=1)
            img = img + rng.normal(0.0, noise, (side, side))
            images[i] = np.clip(img * 255.0, 0.0, 255.0).astype(np.uint8)
        return images, labels

    x_tr, y_tr = batch(n_train)
    x_te, y_te = batch(n_test)
    return x_tr, y_tr, x_te, y_te


def write_synthetic_idx(out_dir: str, n_train: int, n_test: int, seed: int,
                        **kwargs) -> dict:
    """Generate the synthetic set and store it as the four standard IDX files."""
    os.makedirs(out_dir, exist_ok=True)
    x_tr, y_tr, x_te, y_te = synthetic_images(n_train, n_test, seed, **kwargs)
    paths = {}
    for key, arr in [("train_images", x_tr), ("train_labels", y_tr),
                     ("test_images", x_te), ("test_labels", y_te)]:
        path = os.path.join(out_dir, _IDX_NAMES[key])
        write_idx(path, arr)
        paths[key] = path
    return paths


def synthetic_dataset(n_train: int, n_test: int, seed: int, **kwargs) -> Dataset:
    x_tr, y_tr, x_te, y_te = synthetic_images(n_train, n_test, seed, **kwargs)
    return Dataset(images_to_features(x_tr), y_tr.astype(np.int64),
                   x_test=images_to_features(x_te), y_test=y_te.astype(np.int64))
