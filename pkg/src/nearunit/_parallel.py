"""Order-preserving chunked map over replication ranges."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def chunk_ranges(start: int, stop: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, stop)) for a in range(start, stop, size)]


def map_chunks(fn: Callable[..., T], ranges: Sequence[tuple[int, int]], args: tuple = (), workers: int = 1) -> list[T]:
    """Apply ``fn(a, b, *args)`` to every range; results keep the range order.

    ``fn`` must be a module-level function whose result depends only on its
    arguments, so the worker count cannot change the output.
    """
    if workers is None or workers <= 1 or len(ranges) <= 1:
        return [fn(a, b, *args) for a, b in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, a, b, *args) for a, b in ranges]
        return [f.result() for f in futures]
