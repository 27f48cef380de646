"""Application-wide paths, numeric defaults, and config-file loading."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

import yaml


def _find_project_root() -> Path:
    current = Path(__file__).resolve().parent
    for parent in [current] + list(current.parents):
        if (parent / "pyproject.toml").exists():
            return parent
    return Path.cwd()


PROJECT_ROOT: Path = _find_project_root()

DATA_DIR: Path = PROJECT_ROOT / "data"
OUTPUTS_DIR: Path = Path(
    os.getenv("SUPERPIXEL_LIME_OUTPUT_DIR", str(PROJECT_ROOT / "outputs"))
)

# LIME defaults (bandwidth 0.25 and ridge 1 match the lime package image explainer)
DEFAULT_NUM_SAMPLES: int = 1000
DEFAULT_BANDWIDTH: float = 0.25
DEFAULT_RIDGE: float = 1.0
DEFAULT_TOP_K: int = 5
DEFAULT_BATCH_SIZE: int = 64

# Integrated gradients
DEFAULT_IG_STEPS: int = 20
DEFAULT_FD_STEP: float = 1e-4

# Quickshift
DEFAULT_QS_RATIO: float = 1.0
DEFAULT_QS_KERNEL_SIZE: float = 5.0
DEFAULT_QS_MAX_DIST: float = 10.0

# Exact 2^d enumeration guard
MAX_ENUMERATION_D: int = 20

DEFAULT_JACCARD_KS: tuple[int, ...] = (5, 10)

# Singular pivot threshold relative to the largest pivot
PIVOT_RTOL: float = 1e-12


def ensure_dirs(*extra: Path) -> None:
    """Create all required runtime directories."""
    for d in (OUTPUTS_DIR, *extra):
        d.mkdir(parents=True, exist_ok=True)


def load_config(path: Path) -> dict[str, Any]:
    """Load a YAML or JSON config file into a plain mapping.

    JSON is a subset of YAML, so both formats go through ``yaml.safe_load``.
    An empty file yields an empty mapping.
    """
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValueError(f"Config file {path} is not valid YAML/JSON: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ValueError(f"Config file {path} must contain a mapping, got {type(raw).__name__}")
    return raw
