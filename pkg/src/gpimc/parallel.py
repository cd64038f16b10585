"""Deterministic chunk-parallel evaluation.

Work is split into fixed-size chunks keyed by chunk id; results are merged in
chunk order regardless of which worker finished first, so output bytes depend
only on (config, seed), never on the worker count.
"""

from __future__ import annotations

import multiprocessing
import os


def default_workers() -> int:
    env = os.environ.get("GPIMC_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def chunked_map(fn, args_list, n_workers: int = 1) -> list:
    """Apply fn over args_list, preserving order; optionally in a worker pool."""
    if n_workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with multiprocessing.Pool(processes=min(n_workers, len(args_list))) as pool:
        return pool.map(fn, args_list)
