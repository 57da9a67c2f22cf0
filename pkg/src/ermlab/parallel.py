"""Index-ordered parallel map over replicate chunks."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence


def chunks(count: int, parts: int) -> List[range]:
    parts = max(1, min(parts, count)) if count else 1
    size, extra = divmod(count, parts)
    out, start = [], 0
    for p in range(parts):
        stop = start + size + (1 if p < extra else 0)
        out.append(range(start, stop))
        start = stop
    return out


def ordered_map(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally across processes; order is preserved."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
