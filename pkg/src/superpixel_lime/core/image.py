"""Images, superpixel partitions, replacement images and mask application.

Pixel storage is row-major and channel-interleaved: the value of channel
``c`` at pixel ``u = row * width + col`` sits at ``pixels[u * channels + c]``.
Pixel indices are 0-based. Superpixel ids are 1-based (``1..d``) as they
appear in label maps, files and reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from superpixel_lime.utils.logging import get_logger

log = get_logger("image")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """An H×W×C image with values in [0, 1]."""

    height: int
    width: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(f"Image dimensions must be positive, got {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise ValueError(f"Image channels must be 1 or 3, got {self.channels}")
        px = np.array(self.pixels, dtype=np.float64).reshape(-1)
        if px.size != self.height * self.width * self.channels:
            raise ValueError(
                f"Pixel array has {px.size} values, expected "
                f"{self.height}*{self.width}*{self.channels}"
            )
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("Pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def num_pixels(self) -> int:
        """D, the number of pixel positions (channels not counted)."""
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def as_array(self) -> np.ndarray:
        """Read-only H×W×C view."""
        return self.pixels.reshape(self.shape)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        """Build from an H×W (grayscale) or H×W×C array."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise ValueError(f"Expected a 2-D or 3-D array, got shape {a.shape}")
        h, w, c = a.shape
        return cls(height=h, width=w, channels=c, pixels=a.reshape(-1))

    @classmethod
    def constant(cls, height: int, width: int, value: float, channels: int = 1) -> "Image":
        return cls(height, width, channels, np.full(height * width * channels, value))

    def with_pixels(self, pixels: np.ndarray) -> "Image":
        """Same geometry, new values."""
        return Image(self.height, self.width, self.channels, pixels)

    def same_grid(self, other: "Image") -> bool:
        return self.shape == other.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.same_grid(other) and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SuperpixelPartition:
    """Pixel → superpixel label map realizing J_1, …, J_d."""

    height: int
    width: int
    labels: np.ndarray
    d: int = field(init=False)

    def __post_init__(self) -> None:
        lab = np.array(self.labels, dtype=np.int64).reshape(-1)
        if lab.size != self.height * self.width:
            raise ValueError(
                f"Label array has {lab.size} entries, expected {self.height}*{self.width}"
            )
        if lab.size == 0 or lab.min() < 1:
            raise ValueError("Superpixel labels must be integers >= 1")
        d = int(lab.max())
        counts = np.bincount(lab, minlength=d + 1)[1:]
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise ValueError(
                f"Superpixel labels have gaps: ids {(missing + 1).tolist()} never occur in 1..{d}"
            )
        object.__setattr__(self, "labels", _frozen(lab))
        object.__setattr__(self, "d", d)

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    def sizes(self) -> np.ndarray:
        """|J_1|, …, |J_d|."""
        return np.bincount(self.labels, minlength=self.d + 1)[1:]

    def members(self, j: int) -> np.ndarray:
        """Pixel indices of superpixel ``j`` (1-based id)."""
        self._check_id(j)
        return np.flatnonzero(self.labels == j)

    def channel_labels(self, channels: int) -> np.ndarray:
        """0-based superpixel index for every flat pixel value of a ``channels``-channel image."""
        return np.repeat(self.labels - 1, channels)

    def covers(self, image: Image) -> bool:
        return self.height == image.height and self.width == image.width

    def require_covers(self, image: Image) -> None:
        if not self.covers(image):
            raise ValueError(
                f"Partition grid {self.height}x{self.width} does not match "
                f"image grid {image.height}x{image.width}"
            )

    def require_multiple(self) -> None:
        """Reject d < 2 (the weighted-regression theory needs two superpixels)."""
        if self.d < 2:
            raise ValueError(f"At least 2 superpixels are required, partition has d={self.d}")

    def _check_id(self, j: int) -> None:
        if not 1 <= j <= self.d:
            raise ValueError(f"Superpixel id {j} out of range 1..{self.d}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SuperpixelPartition):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and bool(np.array_equal(self.labels, other.labels))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ReplacementSpec:
    """How switched-off superpixels are filled in."""

    mode: Literal["mean", "solid"] = "mean"
    color: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("mean", "solid"):
            raise ValueError(f"Unknown replacement mode: {self.mode!r}")
        if self.mode == "solid":
            if not self.color:
                raise ValueError("Solid replacement needs a color")
            if any(not 0.0 <= c <= 1.0 for c in self.color):
                raise ValueError(f"Replacement color must lie in [0, 1], got {self.color}")

    @classmethod
    def solid(cls, *color: float) -> "ReplacementSpec":
        return cls(mode="solid", color=tuple(float(c) for c in color))

    @classmethod
    def black(cls, channels: int = 1) -> "ReplacementSpec":
        return cls.solid(*([0.0] * channels))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "color": list(self.color)}

    @classmethod
    def from_dict(cls, d: dict) -> "ReplacementSpec":
        return cls(mode=d.get("mode", "mean"), color=tuple(float(c) for c in d.get("color", ())))


@dataclass(frozen=True, eq=False)
class MaskVector:
    """Interpretable features z ∈ {0,1}^d."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.array(self.bits, dtype=np.int8).reshape(-1)
        if not np.isin(b, (0, 1)).all():
            raise ValueError("Mask entries must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(b))

    @property
    def d(self) -> int:
        return int(self.bits.size)

    def zeros(self) -> int:
        """Number of switched-off superpixels."""
        return int(self.d - self.bits.sum())

    @classmethod
    def ones(cls, d: int) -> "MaskVector":
        return cls(np.ones(d, dtype=np.int8))


def compute_replacement(
    image: Image, partition: SuperpixelPartition, spec: ReplacementSpec
) -> Image:
    """Build ξ̄: per-superpixel channel means, or a solid color everywhere."""
    partition.require_covers(image)
    c = image.channels

    if spec.mode == "solid":
        if len(spec.color) != c:
            raise ValueError(
                f"Solid color has {len(spec.color)} components, image has {c} channels"
            )
        return image.with_pixels(np.tile(np.asarray(spec.color, dtype=np.float64), image.num_pixels))

    values = image.as_array().reshape(image.num_pixels, c)
    idx = partition.labels - 1
    sizes = partition.sizes().astype(np.float64)
    out = np.empty_like(values)
    for ch in range(c):
        means = np.bincount(idx, weights=values[:, ch], minlength=partition.d) / sizes
        out[:, ch] = means[idx]
    # means of values in [0,1] can drift by an ulp past the bounds
    return image.with_pixels(np.clip(out.reshape(-1), 0.0, 1.0))


def _require_same_grid(image: Image, replacement: Image, partition: SuperpixelPartition) -> None:
    if not image.same_grid(replacement):
        raise ValueError(f"Image {image.shape} and replacement {replacement.shape} differ in shape")
    partition.require_covers(image)


def apply_masks(
    image: Image, replacement: Image, partition: SuperpixelPartition, masks: np.ndarray
) -> np.ndarray:
    """Perturbed samples for every row of an n×d mask matrix, as an n×(D·C) array."""
    _require_same_grid(image, replacement, partition)
    z = np.atleast_2d(np.asarray(masks))
    if z.shape[1] != partition.d:
        raise ValueError(f"Masks have {z.shape[1]} columns, partition has d={partition.d}")
    keep = z[:, partition.channel_labels(image.channels)].astype(np.float64)
    return keep * image.pixels + (1.0 - keep) * replacement.pixels


def apply_mask(
    image: Image, replacement: Image, partition: SuperpixelPartition, z: MaskVector
) -> Image:
    """x_u = z_j ξ_u + (1 − z_j) ξ̄_u for u in J_j, channel-wise."""
    if z.d != partition.d:
        raise ValueError(f"Mask length {z.d} does not match d={partition.d}")
    return image.with_pixels(apply_masks(image, replacement, partition, z.bits[None, :])[0])


def binary_superpixel_mask(partition: SuperpixelPartition, j: int) -> Image:
    """M_j: single-channel image with 1 on J_j and 0 elsewhere."""
    partition._check_id(j)
    return Image(
        partition.height,
        partition.width,
        1,
        (partition.labels == j).astype(np.float64),
    )
