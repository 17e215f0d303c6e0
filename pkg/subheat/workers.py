""" Thread-pool fan-out of independent numeric tasks

Solvers hand independent jobs (shooting starts, stencil points, kernel
samples) to `map_parallel`. Jobs started from inside a worker run
sequentially so nested fan-outs never deadlock the pool.
"""
import asyncio
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV = 'SUBHEAT_THREADS'

_local = threading.local()

logger = logging.getLogger(__name__)


def max_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring {THREADS_ENV}={value!r}, expected an integer")
    return os.cpu_count() or 1


def _mark_worker():
    _local.in_worker = True


def in_worker() -> bool:
    return getattr(_local, 'in_worker', False)


async def gather_in_threads(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> List[R]:
    """ Run fn over items on a thread pool; results keep the input order """
    items = list(items)
    threads = min(threads or max_threads(), len(items)) or 1
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=threads, initializer=_mark_worker) as pool:
        tasks = [loop.run_in_executor(pool, fn, item) for item in items]
        return list(await asyncio.gather(*tasks))


def map_parallel(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> List[R]:
    """ Synchronous front of `gather_in_threads` """
    items = list(items)
    threads = threads or max_threads()
    if threads <= 1 or len(items) <= 1 or in_worker() or _loop_running():
        return [fn(item) for item in items]
    return asyncio.run(gather_in_threads(fn, items, threads))


def _loop_running() -> bool:
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return False
    return True
