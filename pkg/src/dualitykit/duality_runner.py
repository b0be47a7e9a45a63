"""runner.py: replica executors for dualitykit Monte Carlo experiments."""

import asyncio
import logging
import os
import time

import numpy as np

from datetime import datetime
from typing import Any, Callable

from joblib import Parallel, delayed

from .duality_const import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_THREADS,
    ENV_THREADS,
    STREAM_BATCHES,
)
from .duality_core import (
    DualityDataError,
    DualityError,
)
from .duality_data import (
    RunnerHistoryItem,
)

_LOGGER = logging.getLogger(__name__)


def resolve_threads(threads: int|None = None) -> int:
    """Explicit value first, then the environment, then the default."""
    if threads is None:
        env = os.environ.get(ENV_THREADS, "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                _LOGGER.warning(f"Ignoring {ENV_THREADS}='{env}': not an integer")
                threads = None

    threads = threads if threads is not None else DEFAULT_THREADS
    if threads < 1:
        error = f"Thread count must be at least 1, got {threads}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return threads


def batch_plan(replicas: int, seed: int, *key: int, batch_size: int = DEFAULT_BATCH_SIZE) -> list[tuple[int, np.random.SeedSequence]]:
    """
    Split replicas into batches, each paired with its own child seed.
    Children come from SeedSequence(seed, spawn_key=(STREAM_BATCHES, *key)),
    so the plan depends only on (replicas, seed, key, batch_size).
    """
    if replicas < 1:
        error = f"Replica count must be at least 1, got {replicas}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    sizes = [batch_size] * (replicas // batch_size)
    if replicas % batch_size:
        sizes.append(replicas % batch_size)

    parent = np.random.SeedSequence(seed, spawn_key=(STREAM_BATCHES, *key))
    return list(zip(sizes, parent.spawn(len(sizes))))


def _timed(func: Callable, item: Any) -> tuple[Any, float]:
    start = time.perf_counter()
    result = func(item)
    return (result, time.perf_counter() - start)


class DualityRunner_Base:
    """
    Executes independent replica batches and returns results in batch order
    """

    def __init__(self):
        self._diag_callback = None


    def set_diagnostics(self, callback):
        self._diag_callback = callback


    def _notify(self, context: str, batch: int, elapsed: float):
        _LOGGER.debug(f"{context}: batch {batch} finished in {elapsed:.3f}s")
        if self._diag_callback:
            item = RunnerHistoryItem.create(datetime.now(), context, batch, elapsed)
            self._diag_callback(context, item)


    @property
    def threads(self) -> int:
        raise NotImplementedError("DualityRunner_Base::threads")


    @property
    def closed(self) -> bool:
        raise NotImplementedError("DualityRunner_Base::closed")


    async def async_close(self):
        raise NotImplementedError("DualityRunner_Base::async_close")


    async def async_map(self, func: Callable, items: list, context: str = "map") -> list:
        """
        Apply func to every item; results are returned in item order
        regardless of completion order.
        """
        raise NotImplementedError("DualityRunner_Base::async_map")


    def _check_open(self):
        if self.closed:
            error = f"Runner is closed"
            _LOGGER.debug(error)
            raise DualityError(error)


class DualityRunner_Asyncio(DualityRunner_Base):
    """
    Runs batches in worker threads, at most `threads` at a time
    """

    def __init__(self, threads: int|None = None):
        super().__init__()
        self._threads = resolve_threads(threads)
        self._semaphore = asyncio.Semaphore(self._threads)
        self._closed = False


    @property
    def threads(self) -> int:
        return self._threads


    @property
    def closed(self) -> bool:
        return self._closed


    async def async_close(self):
        self._closed = True


    async def async_map(self, func: Callable, items: list, context: str = "map") -> list:
        self._check_open()

        async def run_one(index: int, item: Any):
            async with self._semaphore:
                result, elapsed = await asyncio.to_thread(_timed, func, item)
            self._notify(context, index, elapsed)
            return result

        return list(await asyncio.gather(*(run_one(i, item) for i, item in enumerate(items))))


class DualityRunner_Joblib(DualityRunner_Base):
    """
    Runs batches through joblib.Parallel; the blocking call is moved off the event loop
    """

    def __init__(self, threads: int|None = None, backend: str = "loky"):
        super().__init__()
        self._threads = resolve_threads(threads)
        self._backend = backend
        self._closed = False


    @property
    def threads(self) -> int:
        return self._threads


    @property
    def closed(self) -> bool:
        return self._closed


    async def async_close(self):
        self._closed = True


    def _parallel_map(self, func: Callable, items: list) -> list:
        parallel = Parallel(n_jobs=self._threads, backend=self._backend)
        return parallel(delayed(_timed)(func, item) for item in items)


    async def async_map(self, func: Callable, items: list, context: str = "map") -> list:
        self._check_open()

        timed = await asyncio.to_thread(self._parallel_map, func, items)
        for index, (_, elapsed) in enumerate(timed):
            self._notify(context, index, elapsed)
        return [result for (result, _) in timed]


def create_runner(threads: int|None = None, backend: str = "asyncio") -> DualityRunner_Base:
    match backend:
        case "asyncio":
            return DualityRunner_Asyncio(threads)
        case "joblib":
            return DualityRunner_Joblib(threads)
        case _:
            error = f"Unknown runner backend '{backend}'"
            _LOGGER.debug(error)
            raise DualityDataError(error)


def mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error (sample std / sqrt(n))"""
    n = samples.shape[0]
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return (mean, se)
