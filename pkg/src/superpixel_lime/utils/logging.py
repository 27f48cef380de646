"""Logging configuration for the ``superpixel_lime`` logger tree."""

from __future__ import annotations

import logging
import sys

ROOT_NAME = "superpixel_lime"
LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s: %(message)s"


def setup_logging(level: int = logging.INFO) -> None:
    """Attach one stderr handler to the package logger and set its level.

    Safe to call repeatedly (each CLI invocation in the tests does): the
    handler is installed once, only the level changes.
    """
    root = logging.getLogger(ROOT_NAME)
    root.setLevel(level)
    if not any(getattr(h, "_superpixel_lime", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
        handler._superpixel_lime = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def get_logger(name: str) -> logging.Logger:
    """``get_logger("explainer")`` and ``get_logger(__name__)`` give the same logger."""
    name = name.removeprefix(f"{ROOT_NAME}.").removeprefix("core.").removeprefix("utils.")
    return logging.getLogger(f"{ROOT_NAME}.{name}")
