"""Superpixel segmenters: a simplified quickshift and a deterministic grid.

Quickshift treats every pixel as a sample in a (row, col, ratio·c_1, …)
feature space. It estimates a Gaussian-kernel density at each pixel,
links each pixel to its nearest neighbor of higher density within
``max_dist``, and turns the resulting forest into superpixels (one per
tree root).

Density and parent search scan a square window of offsets in a fixed
order, each offset processed as one vectorized pass over all pixels,
so the result does not depend on evaluation order. Ties are broken
toward the smaller linear pixel index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from superpixel_lime.core.image import Image, SuperpixelPartition
from superpixel_lime.utils.config import (
    DEFAULT_QS_KERNEL_SIZE,
    DEFAULT_QS_MAX_DIST,
    DEFAULT_QS_RATIO,
)
from superpixel_lime.utils.logging import get_logger

log = get_logger("segmentation")


@dataclass(frozen=True)
class QuickshiftParams:
    ratio: float = DEFAULT_QS_RATIO
    kernel_size: float = DEFAULT_QS_KERNEL_SIZE
    max_dist: float = DEFAULT_QS_MAX_DIST

    def __post_init__(self) -> None:
        for name in ("ratio", "kernel_size", "max_dist"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"Quickshift {name} must be > 0, got {value}")


@dataclass(frozen=True)
class GridParams:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"Grid must have positive rows and cols, got {self.rows}x{self.cols}")
        if self.rows * self.cols < 2:
            raise ValueError("Grid must produce at least 2 superpixels")


def _shifted(arr: np.ndarray, dy: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    """Values at (r+dy, c+dx) and a validity mask, for every (r, c) of a H×W(×k) array."""
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    valid = np.zeros((h, w), dtype=bool)
    r0, r1 = max(0, -dy), min(h, h - dy)
    c0, c1 = max(0, -dx), min(w, w - dx)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = arr[r0 + dy : r1 + dy, c0 + dx : c1 + dx]
        valid[r0:r1, c0:c1] = True
    return out, valid


def _offsets(radius: int) -> list[tuple[int, int]]:
    return [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]


def quickshift_segment(image: Image, params: QuickshiftParams | None = None) -> SuperpixelPartition:
    """Mode-seeking segmentation over joint space and color features."""
    params = params or QuickshiftParams()
    h, w, c = image.shape
    color = image.as_array() * params.ratio
    index = np.arange(h * w, dtype=np.int64).reshape(h, w)

    # Gaussian density, offsets accumulated in a fixed order
    two_sigma_sq = 2.0 * params.kernel_size**2
    radius = int(math.ceil(3 * params.kernel_size))
    density = np.zeros((h, w))
    for dy, dx in _offsets(radius):
        nbr, valid = _shifted(color, dy, dx)
        dist_sq = dy * dy + dx * dx + np.sum((nbr - color) ** 2, axis=2)
        density += np.where(valid, np.exp(-dist_sq / two_sigma_sq), 0.0)

    # Nearest strictly-higher neighbor in the order (density, -index)
    link_radius = int(math.floor(params.max_dist))
    max_dist_sq = params.max_dist**2
    best_dist = np.full((h, w), np.inf)
    parent = index.copy()
    for dy, dx in _offsets(link_radius):
        if dy == 0 and dx == 0:
            continue
        spatial = dy * dy + dx * dx
        if spatial > max_dist_sq:
            continue
        nbr_color, valid = _shifted(color, dy, dx)
        nbr_density, _ = _shifted(density, dy, dx)
        nbr_index, _ = _shifted(index, dy, dx)
        dist_sq = spatial + np.sum((nbr_color - color) ** 2, axis=2)
        higher = (nbr_density > density) | ((nbr_density == density) & (nbr_index < index))
        closer = (dist_sq < best_dist) | ((dist_sq == best_dist) & (nbr_index < parent))
        take = valid & higher & (dist_sq <= max_dist_sq) & closer
        best_dist = np.where(take, dist_sq, best_dist)
        parent = np.where(take, nbr_index, parent)

    # Pointer jumping to the tree roots
    flat = parent.reshape(-1)
    while True:
        nxt = flat[flat]
        if np.array_equal(nxt, flat):
            break
        flat = nxt

    roots = np.unique(flat)
    labels = np.searchsorted(roots, flat) + 1
    partition = SuperpixelPartition(h, w, labels)
    if partition.d < 2:
        log.warning("Quickshift produced a single superpixel (uniform image or wide kernel)")
    log.info("Quickshift: %dx%d image -> d=%d superpixels", h, w, partition.d)
    return partition


def grid_segment(height: int, width: int, params: GridParams) -> SuperpixelPartition:
    """rows×cols rectangular blocks, labeled in row-major order.

    Block edges follow ``numpy.array_split``: the first ``height % rows``
    block rows get one extra row (likewise for columns).
    """
    if params.rows > height or params.cols > width:
        raise ValueError(
            f"Grid {params.rows}x{params.cols} exceeds image size {height}x{width}"
        )
    row_block = np.concatenate(
        [np.full(len(chunk), i) for i, chunk in enumerate(np.array_split(np.arange(height), params.rows))]
    )
    col_block = np.concatenate(
        [np.full(len(chunk), i) for i, chunk in enumerate(np.array_split(np.arange(width), params.cols))]
    )
    labels = row_block[:, None] * params.cols + col_block[None, :] + 1
    return SuperpixelPartition(height, width, labels.reshape(-1))
