import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Parallelism cap from ``MFG_THREADS`` (default 1)."""
    try:
        n = int(os.environ.get("MFG_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pmap(fn, items, workers: int | None = None) -> list:
    """Ordered map; results never depend on the worker count."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
