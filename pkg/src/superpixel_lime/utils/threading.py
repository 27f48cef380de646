"""Ordered fan-out of independent work units onto a thread pool.

Results always come back in input order, so any reduction done by the
caller afterwards is independent of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from superpixel_lime.utils.logging import get_logger

log = get_logger("threading")

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item, optionally on ``threads`` workers.

    ``threads <= 1`` runs sequentially in the calling thread. Exceptions
    raised by ``fn`` propagate to the caller.
    """
    work = list(items)
    if threads <= 1 or len(work) <= 1:
        return [fn(item) for item in work]

    log.debug("Dispatching %d work units to %d threads", len(work), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, work))
