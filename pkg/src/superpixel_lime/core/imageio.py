"""Read and write images and partitions.

Supported formats:

- Netpbm PGM (P2 ASCII, P5 binary) for grayscale and PPM (P3, P6) for RGB.
  Samples are mapped linearly, ``value / maxval``; files are written with
  ``maxval = 255`` and ``round(255 * v)``.
- CSV images: one row per image row. RGB images put the three channels of
  each pixel in consecutive columns.
- Partitions: CSV of integer labels (one row per image row) plus a JSON
  sidecar ``{"d", "height", "width"}`` next to it (``<stem>.json``).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from superpixel_lime.core.image import Image, SuperpixelPartition
from superpixel_lime.utils.logging import get_logger

log = get_logger("imageio")

_PNM_CHANNELS = {"P2": 1, "P5": 1, "P3": 3, "P6": 3}


def _pnm_tokens(data: bytes, count: int, start: int = 0) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the last one.
    """
    tokens: list[bytes] = []
    pos = start
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ValueError("Truncated PNM header")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < n and not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    return tokens, pos


def read_pnm(path: Path) -> Image:
    """Read a PGM/PPM file (P2, P3, P5, P6)."""
    data = Path(path).read_bytes()
    header, pos = _pnm_tokens(data, 4)
    magic = header[0].decode("ascii", errors="replace")
    if magic not in _PNM_CHANNELS:
        raise ValueError(f"{path}: unsupported Netpbm magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in header[1:4])
    except ValueError:
        raise ValueError(f"{path}: malformed PNM header")
    if width < 1 or height < 1 or not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported dimensions or maxval ({width}x{height}, {maxval})")

    channels = _PNM_CHANNELS[magic]
    count = width * height * channels
    if magic in ("P2", "P3"):
        body = data[pos:].split()
        if len(body) < count:
            raise ValueError(f"{path}: expected {count} samples, found {len(body)}")
        raw = np.array([int(t) for t in body[:count]], dtype=np.float64)
    else:
        # exactly one whitespace byte separates header and raster
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) < count:
            raise ValueError(f"{path}: truncated raster ({len(raster)} of {count} bytes)")
        raw = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)

    if raw.max(initial=0) > maxval:
        raise ValueError(f"{path}: sample exceeds maxval {maxval}")
    log.debug("Read %s %dx%d (%s)", path, width, height, magic)
    return Image(height, width, channels, raw / maxval)


def write_pnm(image: Image, path: Path, binary: bool = True) -> Path:
    """Write PGM (grayscale) or PPM (RGB); binary P5/P6 by default."""
    path = Path(path)
    gray = image.channels == 1
    magic = ("P5" if gray else "P6") if binary else ("P2" if gray else "P3")
    samples = np.rint(image.pixels * 255).astype(np.uint8)
    header = f"{magic}\n{image.width} {image.height}\n255\n".encode("ascii")

    if binary:
        path.write_bytes(header + samples.tobytes())
    else:
        per_row = image.width * image.channels
        rows = samples.reshape(image.height, per_row)
        text = "\n".join(" ".join(str(v) for v in row) for row in rows)
        path.write_bytes(header + text.encode("ascii") + b"\n")
    return path


def read_image_csv(path: Path, channels: int = 1) -> Image:
    df = pd.read_csv(path, header=None, float_precision="round_trip")
    values = df.to_numpy(dtype=np.float64)
    height, cols = values.shape
    if cols % channels:
        raise ValueError(f"{path}: {cols} columns is not a multiple of {channels} channels")
    return Image(height, cols // channels, channels, values.reshape(-1))


def write_image_csv(image: Image, path: Path) -> Path:
    rows = image.pixels.reshape(image.height, image.width * image.channels)
    pd.DataFrame(rows).to_csv(path, header=False, index=False, float_format="%.17g")
    return Path(path)


def read_image(path: Path, channels: int = 1) -> Image:
    """Dispatch on suffix: .pgm/.ppm/.pnm or .csv."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Image file not found: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    if suffix == ".csv":
        return read_image_csv(path, channels=channels)
    raise ValueError(f"Unsupported image format: {path.suffix!r} (use PGM, PPM or CSV)")


def write_image(image: Image, path: Path) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return write_image_csv(image, path)
    return write_pnm(image, path)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_partition(partition: SuperpixelPartition, path: Path) -> Path:
    """Write the label CSV and its JSON sidecar. Returns the CSV path."""
    path = Path(path)
    rows = partition.labels.reshape(partition.height, partition.width)
    pd.DataFrame(rows).to_csv(path, header=False, index=False)
    meta = {"d": partition.d, "height": partition.height, "width": partition.width}
    _sidecar(path).write_text(json.dumps(meta, indent=2))
    log.info("Saved partition with d=%d to %s", partition.d, path)
    return path


def read_partition(path: Path) -> SuperpixelPartition:
    """Read a label CSV, cross-checking the JSON sidecar when present."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Partition file not found: {path}")
    labels = pd.read_csv(path, header=None).to_numpy()
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"{path}: partition labels must be integers")
    partition = SuperpixelPartition(labels.shape[0], labels.shape[1], labels.reshape(-1))

    meta_path = _sidecar(path)
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        expected = (meta.get("d"), meta.get("height"), meta.get("width"))
        actual = (partition.d, partition.height, partition.width)
        if expected != actual:
            raise ValueError(
                f"{path}: sidecar says (d, height, width)={expected}, labels give {actual}"
            )
    return partition
