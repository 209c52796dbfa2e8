"""Filter-latency benchmark over a synthetic column set.

Two scenarios, per kernel backend:

* cold: a fresh engine evaluates all filters from scratch;
* warm: one slider moved, the other filters' masks already cached.

The warm scenario uses a different range each repetition (like a real drag),
so only the unchanged filters benefit from the cache.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from csn import kernels
from csn.filters import DimensionColumn, FilterEngine, RangeFilter


def synthetic_columns(
    n: int = 100_000, dims: int = 8, seed: int = 42, missing_frac: float = 0.02
) -> list[DimensionColumn]:
    rng = np.random.Generator(np.random.PCG64(seed))
    cols = []
    for d in range(dims):
        values = rng.normal(0.0, 1.0, n)
        miss = rng.random(n) < missing_frac
        values[miss] = np.nan
        cols.append(DimensionColumn.from_values(f"dim_{d}", values, bin_count=30))
    return cols


def _active_ranges(cols: list[DimensionColumn], shrink: float) -> list[RangeFilter]:
    out = []
    for col in cols:
        span = col.max - col.min
        out.append(RangeFilter(col.name, col.min + shrink * span, col.max - shrink * span))
    return out


@dataclass(frozen=True)
class BackendTimings:
    backend: str
    cold_ms: float  # median full evaluation on a fresh engine
    warm_ms: float  # median re-filter after one slider change
    warm_max_ms: float
    hist_ms: float  # median histogram set for the current mask
    pass_count: int


def run_benchmark(
    n: int = 100_000, dims: int = 8, repeats: int = 30, seed: int = 42
) -> list[BackendTimings]:
    cols = synthetic_columns(n=n, dims=dims, seed=seed)
    results = []
    for name in kernels.available_backends():
        backend = kernels.get_backend(name)
        ranges = _active_ranges(cols, 0.1)

        cold_times = []
        pass_count = 0
        for _ in range(repeats):
            engine = FilterEngine(cols, kernels=backend)
            t0 = time.perf_counter()
            mask = engine.apply(ranges)
            cold_times.append((time.perf_counter() - t0) * 1e3)
            pass_count = mask.pass_count

        engine = FilterEngine(cols, kernels=backend)
        engine.apply(ranges)  # populate the cache for the unchanged sliders
        moving = cols[0]
        span = moving.max - moving.min
        warm_times = []
        for r in range(repeats):
            # a fresh lo each round keeps the moved slider out of the cache
            lo = moving.min + (0.05 + 0.001 * (r + 1)) * span
            changed = [RangeFilter(moving.name, lo, ranges[0].hi), *ranges[1:]]
            t0 = time.perf_counter()
            engine.apply(changed)
            warm_times.append((time.perf_counter() - t0) * 1e3)

        mask = engine.apply(ranges)
        hist_times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            engine.histograms(mask)
            hist_times.append((time.perf_counter() - t0) * 1e3)

        results.append(
            BackendTimings(
                backend=name,
                cold_ms=statistics.median(cold_times),
                warm_ms=statistics.median(warm_times),
                warm_max_ms=max(warm_times),
                hist_ms=statistics.median(hist_times),
                pass_count=pass_count,
            )
        )
    return results


def format_report(results: list[BackendTimings], n: int, dims: int) -> str:
    lines = [f"re-filter benchmark: {n} objects x {dims} dimensions"]
    for r in results:
        lines.append(
            f"  {r.backend:<8} cold {r.cold_ms:8.3f} ms   "
            f"warm {r.warm_ms:7.3f} ms (max {r.warm_max_ms:.3f})   "
            f"histograms {r.hist_ms:8.3f} ms   pass_count {r.pass_count}"
        )
    return "\n".join(lines)
