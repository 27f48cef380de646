"""Shared test fixtures: small images, partitions and models."""

from __future__ import annotations

import numpy as np

from superpixel_lime.core.blackbox import LinearModel, ShapeDetector
from superpixel_lime.core.image import Image, SuperpixelPartition
from superpixel_lime.core.segmentation import GridParams, grid_segment

# -----------------------------------------------------------------------
# Images
# -----------------------------------------------------------------------


def random_image(height: int = 6, width: int = 8, channels: int = 1, seed: int = 11) -> Image:
    rng = np.random.default_rng(seed)
    return Image(height, width, channels, rng.uniform(0.0, 1.0, height * width * channels))


def two_halves_image(height: int = 6, width: int = 8, left: float = 0.1, right: float = 0.9) -> Image:
    """Left half ``left``, right half ``right``."""
    arr = np.full((height, width), left)
    arr[:, width // 2 :] = right
    return Image.from_array(arr)


def bright_rectangle_image(
    height: int = 28,
    width: int = 28,
    top: int = 0,
    left: int = 0,
    rows: int = 4,
    cols: int = 4,
    value: float = 0.9,
    background: float = 0.1,
) -> Image:
    arr = np.full((height, width), background)
    arr[top : top + rows, left : left + cols] = value
    return Image.from_array(arr)


# -----------------------------------------------------------------------
# Partitions
# -----------------------------------------------------------------------


def grid(height: int = 6, width: int = 8, rows: int = 3, cols: int = 4) -> SuperpixelPartition:
    return grid_segment(height, width, GridParams(rows, cols))


def two_column_partition(height: int = 1, width: int = 2) -> SuperpixelPartition:
    """Left half superpixel 1, right half superpixel 2."""
    labels = np.ones((height, width), dtype=np.int64)
    labels[:, width // 2 :] = 2
    return SuperpixelPartition(height, width, labels.reshape(-1))


# -----------------------------------------------------------------------
# Models
# -----------------------------------------------------------------------


def random_linear(size: int, seed: int = 5) -> LinearModel:
    return LinearModel(np.random.default_rng(seed).normal(size=size))


def rectangle_detector(
    height: int, width: int, top: int, left: int, rows: int, cols: int, tau: float = 0.5
) -> ShapeDetector:
    return ShapeDetector.from_rectangle(height, width, top, left, rows, cols, tau)


MODEL_SPEC_YAML = """\
type: shape_detector
tau: 0.5
rectangle:
  top: 0
  left: 0
  height: 2
  width: 2
"""

LINEAR_SPEC_YAML = """\
type: linear
csv: coefficients.csv
"""
