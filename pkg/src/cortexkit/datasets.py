"""Data sources: the 2-D sine-boundary task, box samplers, and file loaders."""

from __future__ import annotations

import struct

import numpy as np

from .validation import check_rng

SQRT2 = np.sqrt(2.0)

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049
CIFAR_RECORD_BYTES = 1 + 32 * 32 * 3


# ---------------------------------------------------------------------------
# 2-D point classification task


def boundary_offset(x, y):
    """Signed distance term of the class boundary in rotated coordinates.

    The boundary is y' = 0.4 sin(4 pi x'/sqrt(2)) in a frame rotated +45
    degrees, i.e. x' = (x+y)/sqrt(2), y' = (y-x)/sqrt(2). Negative offset
    means the point lies below the curve.
    """
    xr = (np.asarray(x) + np.asarray(y)) / SQRT2
    yr = (np.asarray(y) - np.asarray(x)) / SQRT2
    return yr - 0.4 * np.sin(4.0 * np.pi * xr / SQRT2)


def point_label(x, y) -> int:
    """Class of one point: 0 below the rotated sine curve, 1 on or above it."""
    return int(boundary_offset(x, y) >= 0.0)


def label_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return (boundary_offset(points[:, 0], points[:, 1]) >= 0.0).astype(np.int64)


def sample_labeled_points(rng, n: int):
    """n uniform points in the unit square with their boundary labels."""
    pts = check_rng(rng).uniform(0.0, 1.0, size=(n, 2))
    return pts, label_points(pts)


# ---------------------------------------------------------------------------
# box samplers


class RandomWalk:
    """Fixed-step random walk inside the unit box.

    Direction is uniform; a step that would leave the box resamples its
    direction until the move stays inside (reflection was rejected: it
    slightly overweights the walls).
    """

    def __init__(self, random_state=0, step=0.02, start=(0.5, 0.5)):
        self.rng = check_rng(random_state)
        self.step = step
        self.position = np.array(start, dtype=np.float64)
        if not (0.0 <= self.position[0] <= 1.0 and 0.0 <= self.position[1] <= 1.0):
            raise ValueError(f"start {start} outside the unit box")

    def advance(self) -> np.ndarray:
        while True:
            theta = self.rng.uniform(0.0, 2.0 * np.pi)
            cand = self.position + self.step * np.array([np.cos(theta), np.sin(theta)])
            if 0.0 <= cand[0] <= 1.0 and 0.0 <= cand[1] <= 1.0:
                self.position = cand
                return cand.copy()

    def sample(self, n: int) -> np.ndarray:
        return np.stack([self.advance() for _ in range(n)])


class UniformBoxSampler:
    """Independent uniform draws from the unit box."""

    def __init__(self, random_state=0):
        self.rng = check_rng(random_state)

    def sample(self, n: int) -> np.ndarray:
        return self.rng.uniform(0.0, 1.0, size=(n, 2))


class BimodalGaussianSampler:
    """Equal-probability mixture of two isotropic Gaussians.

    Defaults put the modes at (0.3, 0.3) and (0.6, 0.6) with per-axis spreads
    0.08 and 0.1. Samples outside the unit box are kept.
    """

    def __init__(self, random_state=0, mode1=(0.3, 0.3), scale1=0.08,
                 mode2=(0.6, 0.6), scale2=0.1):
        self.rng = check_rng(random_state)
        self.mode1 = np.asarray(mode1, dtype=np.float64)
        self.scale1 = scale1
        self.mode2 = np.asarray(mode2, dtype=np.float64)
        self.scale2 = scale2

    def sample(self, n: int) -> np.ndarray:
        pick = self.rng.random(n) < 0.5
        noise = self.rng.standard_normal((n, 2))
        out = np.where(pick[:, None],
                       self.mode1 + self.scale1 * noise,
                       self.mode2 + self.scale2 * noise)
        return out


# ---------------------------------------------------------------------------
# IDX (MNIST-style) files


def load_idx_images(path) -> np.ndarray:
    """Images from an IDX file as [n, rows*cols] float64 scaled to [0, 1]."""
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise ValueError(f"{path}: truncated IDX image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != MNIST_IMAGE_MAGIC:
            raise ValueError(f"{path}: bad image magic {magic}, expected {MNIST_IMAGE_MAGIC}")
        raw = f.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise ValueError(f"{path}: truncated IDX image data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise ValueError(f"{path}: truncated IDX label header")
        magic, count = struct.unpack(">II", header)
        if magic != MNIST_LABEL_MAGIC:
            raise ValueError(f"{path}: bad label magic {magic}, expected {MNIST_LABEL_MAGIC}")
        raw = f.read(count)
    if len(raw) != count:
        raise ValueError(f"{path}: truncated IDX label data")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist(images_path, labels_path):
    X = load_idx_images(images_path)
    y = load_idx_labels(labels_path)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"image count {X.shape[0]} != label count {y.shape[0]}")
    return X, y


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of load_idx_images; images is uint8 [n, rows, cols]."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", MNIST_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", MNIST_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# ---------------------------------------------------------------------------
# CIFAR-10 binary batches


def load_cifar10_batch(path):
    """One binary batch: records of 1 label byte + 3072 pixel bytes."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    y = records[:, 0].astype(np.int64)
    X = records[:, 1:].astype(np.float64) / 255.0
    return X, y


def load_cifar10(paths):
    """Concatenate several batch files (five for the full training set)."""
    parts = [load_cifar10_batch(p) for p in paths]
    X = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    return X, y
