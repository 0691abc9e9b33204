"""Synthetic weld radiographs with known anomaly masks."""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from config.config import CLASS_LABELS, CRACKING, LACK_OF_PENETRATION, NO_ANOMALY, POROSITY
from src.rng import STREAM_SYNTHETIC, substream
from utils.custom_exception import InputError

IMAGE_SIZE = 32
BACKGROUND_LEVEL = 0.65
TEXTURE_AMPLITUDE = 0.006
NOISE_SD = 0.005
ANOMALY_DEPTH = 0.4


@dataclass(frozen=True, eq=False)
class SyntheticRadiograph:
    pixels: np.ndarray
    label: str
    anomaly_mask: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        mask = np.asarray(self.anomaly_mask, dtype=bool)
        if pixels.ndim != 2 or mask.shape != pixels.shape:
            raise InputError(f"pixels and mask must be matching 2-D grids, got {pixels.shape} and {mask.shape}")
        if not np.all(np.isfinite(pixels)) or np.any(pixels < 0) or np.any(pixels > 1):
            raise InputError("pixel intensities must lie in [0, 1]")
        if self.label not in CLASS_LABELS:
            raise InputError(f"unknown radiograph label {self.label!r}")
        if (self.label == NO_ANOMALY) != (not mask.any()):
            raise InputError("anomaly mask must be empty exactly when the label is 'none'")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "anomaly_mask", mask)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    texture = np.zeros((size, size))
    for _ in range(3):
        fx, fy = rng.uniform(1.0, 4.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        texture += np.sin(2 * np.pi * (fx * x + fy * y) + phase)
    image = BACKGROUND_LEVEL + TEXTURE_AMPLITUDE * texture + rng.normal(0.0, NOISE_SD, (size, size))
    return np.clip(image, 0.0, 1.0)


def _paint_band(rng: np.random.Generator, size: int) -> np.ndarray:
    thickness = int(rng.integers(4, 6))
    top = int(rng.integers(6, size - 6 - thickness))
    mask = np.zeros((size, size), dtype=bool)
    mask[top:top + thickness, :] = True
    return mask


def _paint_crack(rng: np.random.Generator, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    length = int(rng.integers(size // 2, size - 6))
    col = int(rng.integers(2, size - length - 2 + 1))
    row = int(rng.integers(8, size - 8))
    for c in range(col, col + length):
        mask[row, c] = True
        row = int(np.clip(row + rng.integers(-1, 2), 3, size - 4))
        mask[row, c] = True
    return mask


def _paint_pores(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(4, 8))):
        cy, cx = rng.uniform(4, size - 4, 2)
        radius = rng.uniform(1.5, 2.0)
        mask |= (y - cy) ** 2 + (x - cx) ** 2 <= radius ** 2
    return mask


PAINTERS = {
    LACK_OF_PENETRATION: _paint_band,
    CRACKING: _paint_crack,
    POROSITY: _paint_pores,
}


def make_radiograph(label: str, seed: int, index: int, size: int = IMAGE_SIZE) -> SyntheticRadiograph:
    """One image; depends only on ``(seed, label, index)``."""
    if label not in CLASS_LABELS:
        raise InputError(f"unknown radiograph label {label!r}")
    rng = substream(seed, STREAM_SYNTHETIC, CLASS_LABELS.index(label), index)
    image = _background(rng, size)
    mask = np.zeros((size, size), dtype=bool)
    if label != NO_ANOMALY:
        mask = PAINTERS[label](rng, size)
        depth = ANOMALY_DEPTH * rng.uniform(0.85, 1.15)
        image = np.where(mask, image - depth, image)
    return SyntheticRadiograph(np.clip(image, 0.0, 1.0), label, mask)


def generate_dataset(n_per_class: int, seed: int, labels: Sequence[str] = CLASS_LABELS,
                     size: int = IMAGE_SIZE) -> List[SyntheticRadiograph]:
    """Balanced dataset, classes interleaved: ``n_per_class`` images of every label."""
    if n_per_class < 1:
        raise InputError(f"n_per_class must be >= 1, got {n_per_class}")
    return [make_radiograph(label, seed, i, size) for i in range(n_per_class) for label in labels]


def stack(dataset: Sequence[SyntheticRadiograph], labels: Sequence[str] = CLASS_LABELS):
    """Images as an ``(N, H, W)`` array and labels as class indices."""
    x = np.stack([r.pixels for r in dataset])
    y = np.array([labels.index(r.label) for r in dataset], dtype=np.int64)
    return x, y
