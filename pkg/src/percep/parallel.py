"""Order-preserving worker-pool mapping over independent work items."""
import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "PERCEP_THREADS"


def resolve_threads(threads=None):
    """CLI flag wins, then PERCEP_THREADS, then the machine's core count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items, threads=1):
    """Map fn over items, preserving input order in the result list.

    Items must be independent; with threads=1 this is a plain loop.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
