"""Synthetic handwritten-digit stand-in written in the standard IDX format.

Digits are rendered with Pillow's embedded font, then randomly shifted,
rotated, scaled and noised so an MLP has to work for its accuracy. The
output goes through save_idx, so runs consume it through the exact same
loader path as the real MNIST files (drop those in to use them instead).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

from .data import IMAGE_SIDE, Dataset, save_idx

TRAIN_IMAGES = "train-images-idx3-ubyte.gz"
TRAIN_LABELS = "train-labels-idx1-ubyte.gz"
TEST_IMAGES = "t10k-images-idx3-ubyte.gz"
TEST_LABELS = "t10k-labels-idx1-ubyte.gz"

_FONT_CACHE: dict[int, ImageFont.FreeTypeFont] = {}


def _font(size: int) -> ImageFont.FreeTypeFont:
    if size not in _FONT_CACHE:
        _FONT_CACHE[size] = ImageFont.load_default(size=size)
    return _FONT_CACHE[size]


def render_digit(label: int, rng: np.random.Generator) -> np.ndarray:
    """One distorted 28x28 uint8 digit image."""
    size = int(rng.integers(16, 25))
    dx, dy = rng.integers(-3, 4, size=2)
    angle = rng.uniform(-25.0, 25.0)

    img = Image.new("L", (IMAGE_SIDE, IMAGE_SIDE), 0)
    draw = ImageDraw.Draw(img)
    draw.text(
        (IMAGE_SIDE / 2 + dx, IMAGE_SIDE / 2 + dy),
        str(label),
        fill=int(rng.integers(180, 256)),
        font=_font(size),
        anchor="mm",
    )
    img = img.rotate(angle, resample=Image.BILINEAR, center=(14 + dx, 14 + dy))
    if rng.random() < 0.5:
        img = img.filter(ImageFilter.GaussianBlur(radius=rng.uniform(0.3, 0.9)))

    arr = np.asarray(img, dtype=np.float64)
    arr += rng.normal(0.0, 18.0, size=arr.shape)
    return np.clip(arr, 0, 255).astype(np.uint8)


def make_dataset(count: int, rng: np.random.Generator) -> Dataset:
    labels = rng.integers(0, 10, size=count)
    images = np.empty((count, IMAGE_SIDE * IMAGE_SIDE), dtype=np.float64)
    for i, label in enumerate(labels):
        images[i] = render_digit(int(label), rng).ravel() / 255.0
    return Dataset(images, labels.astype(np.int64))


def generate_idx_files(
    out_dir: str | Path, train_count: int, test_count: int, seed: int
) -> dict[str, Path]:
    """Write a train/test IDX file set with canonical MNIST names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD161)))
    train = make_dataset(train_count, rng)
    test = make_dataset(test_count, rng)
    paths = {
        "train_images": out / TRAIN_IMAGES,
        "train_labels": out / TRAIN_LABELS,
        "test_images": out / TEST_IMAGES,
        "test_labels": out / TEST_LABELS,
    }
    save_idx(train, paths["train_images"], paths["train_labels"])
    save_idx(test, paths["test_images"], paths["test_labels"])
    return paths
