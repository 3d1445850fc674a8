"""Process-pool map with results returned in task order."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int | None) -> int:
    """Explicit count, else the MFC_WORKERS environment variable, else 1."""
    if workers is None:
        workers = int(os.environ.get("MFC_WORKERS", "1") or 1)
    return max(1, int(workers))


def run_tasks(fn, tasks, workers: int | None = 1) -> list:
    """Apply fn(*task) to each task. Output order follows input order, so reductions are deterministic."""
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        futs = [ex.submit(fn, *t) for t in tasks]
        return [f.result() for f in futs]
