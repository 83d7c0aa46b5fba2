"""Deterministic task fan-out: per-task RNG streams, index-ordered merge."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def task_rng(seed: int, kind: int, index: int) -> np.random.Generator:
    """Counter-style stream derivation: adding parallelism never reorders
    random draws because each task's stream depends only on (kind, index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(kind, index)))


def run_tasks(worker, n_tasks: int, threads: int = 1) -> list:
    """Run worker(i) for i in 0..n_tasks-1, results in index order."""
    if threads <= 1 or n_tasks <= 1:
        return [worker(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_tasks)))
