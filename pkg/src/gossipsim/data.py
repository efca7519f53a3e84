"""MNIST-format IDX ingestion, Dirichlet label skew, and batch sampling."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
N_LABELS = 10


class IdxParseError(ValueError):
    """Malformed IDX container (bad magic, bad dims, truncated payload)."""


@dataclass
class Dataset:
    images: np.ndarray  # (count, 784) float64 in [0, 1]
    labels: np.ndarray  # (count,) int64 in [0, 10)
    _label_order: np.ndarray | None = field(default=None, repr=False)
    _label_starts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"image count {self.images.shape[0]} != label count {self.labels.shape[0]}"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, count: int) -> "Dataset":
        """First `count` samples (deterministic subsetting for desk-scale runs)."""
        if count >= len(self):
            return self
        return Dataset(self.images[:count], self.labels[:count])

    def label_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Stable sample ordering grouped by label, cached.

        Returns (order, starts): order sorts sample indices by label,
        starts[l] is the offset of label l's block (length N_LABELS+1).
        """
        if self._label_order is None:
            order = np.argsort(self.labels, kind="stable")
            counts = np.bincount(self.labels, minlength=N_LABELS)
            starts = np.zeros(N_LABELS + 1, dtype=np.int64)
            np.cumsum(counts, out=starts[1:])
            self._label_order = order
            self._label_starts = starts
        return self._label_order, self._label_starts


def _open_maybe_gzip(path: str | Path, mode: str):
    if str(path).endswith(".gz"):
        if "w" in mode:
            # mtime pinned to zero so archives are byte-reproducible
            return gzip.GzipFile(path, mode=mode, mtime=0)
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxParseError(f"{path}: truncated while reading {what} ({len(data)}/{n} bytes)")
    return data


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Parse a big-endian IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1]; .gz inputs are decompressed transparently.
    """
    for p in (images_path, labels_path):
        if not Path(p).exists():
            raise ConfigError(f"dataset file not found: {p}")

    with _open_maybe_gzip(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, images_path, "header"))
        if magic != IMAGE_MAGIC:
            raise IdxParseError(f"{images_path}: bad image magic 0x{magic:08x}")
        if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
            raise IdxParseError(f"{images_path}: expected 28x28 images, got {rows}x{cols}")
        if count < 0:
            raise IdxParseError(f"{images_path}: negative image count {count}")
        raw = _read_exact(f, count * rows * cols, images_path, "pixels")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with _open_maybe_gzip(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">ii", _read_exact(f, 8, labels_path, "header"))
        if magic != LABEL_MAGIC:
            raise IdxParseError(f"{labels_path}: bad label magic 0x{magic:08x}")
        if label_count < 0:
            raise IdxParseError(f"{labels_path}: negative label count {label_count}")
        raw = _read_exact(f, label_count, labels_path, "labels")
        labels = np.frombuffer(raw, dtype=np.uint8)

    if count != label_count:
        raise IdxParseError(
            f"image count {count} != label count {label_count} "
            f"({images_path} vs {labels_path})"
        )
    if labels.size and labels.max() >= N_LABELS:
        raise IdxParseError(f"{labels_path}: label {labels.max()} outside [0, {N_LABELS})")

    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def save_idx(dataset: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a Dataset back out as an IDX pair (round-trips load_idx bytes)."""
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    with _open_maybe_gzip(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, len(dataset), IMAGE_SIDE, IMAGE_SIDE))
        f.write(pixels.tobytes())
    with _open_maybe_gzip(labels_path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, len(dataset)))
        f.write(dataset.labels.astype(np.uint8).tobytes())


@dataclass
class NodeDistribution:
    probs: np.ndarray  # length N_LABELS, non-negative, sums to 1

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (N_LABELS,):
            raise ValueError(f"expected {N_LABELS} label probabilities, got {self.probs.shape}")
        if (self.probs < 0).any():
            raise ValueError("label probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"label probabilities sum to {self.probs.sum()}, expected 1")


def dirichlet_partition(
    alpha: float, n_nodes: int, n_labels: int, rng: np.random.Generator
) -> list[NodeDistribution]:
    """Per-node label distributions from a symmetric Dirichlet(alpha).

    Each node draws from its own child stream of `rng` (normalized
    Gamma(alpha, 1) variates), so node i's distribution does not depend
    on how many other nodes exist or the order they are built.
    """
    if alpha <= 0:
        raise ConfigError(f"Dirichlet alpha must be > 0, got {alpha}")
    if not 1 <= n_labels <= N_LABELS:
        raise ConfigError(f"n_labels must be in [1, {N_LABELS}], got {n_labels}")
    out = []
    for child in rng.spawn(n_nodes):
        g = child.gamma(alpha, 1.0, size=n_labels)
        while g.sum() == 0.0:  # possible underflow for very small alpha
            g = child.gamma(alpha, 1.0, size=n_labels)
        probs = np.zeros(N_LABELS)
        probs[:n_labels] = g / g.sum()
        out.append(NodeDistribution(probs))
    return out


def sample_batch(
    dataset: Dataset,
    dist: NodeDistribution | None,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a training batch with replacement.

    dist=None samples uniformly (IID). Otherwise each sample's label is
    drawn from `dist` restricted to labels present in the dataset, then a
    uniform example of that label is picked.
    """
    if len(dataset) == 0:
        raise ValueError("cannot sample from an empty dataset")
    if dist is None:
        idx = rng.integers(0, len(dataset), size=batch_size)
        return dataset.images[idx], dataset.labels[idx]

    order, starts = dataset.label_index()
    counts = np.diff(starts)
    probs = np.where(counts > 0, dist.probs, 0.0)
    mass = probs.sum()
    if mass == 0.0:
        raise ValueError("node's label distribution has no mass on labels present in dataset")
    probs = probs / mass

    drawn_labels = rng.choice(N_LABELS, size=batch_size, p=probs)
    offsets = (rng.random(batch_size) * counts[drawn_labels]).astype(np.int64)
    idx = order[starts[drawn_labels] + offsets]
    return dataset.images[idx], dataset.labels[idx]
