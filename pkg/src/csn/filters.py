"""Conjunctive range filters, per-dimension histograms, bin intervals.

Semantics, shared with the client mirror and with Bin Mode:

* a filter is *inactive* when [lo, hi] covers the dimension's full domain;
  inactive filters constrain nothing, so objects with a missing value pass;
* an *active* filter passes an object iff its value is non-missing and
  lo <= value <= hi; filters combine by conjunction;
* histogram bin b is [edges[b], edges[b+1]) with the last bin closed on the
  right, where edges[b] = min + b * (max - min) / bin_count and the final
  edge is pinned to max exactly. Binning is defined by edge comparison, so a
  range filter built from a bin's edges reproduces the bin's count exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from csn import kernels as default_kernels


class FilterError(Exception):
    """A filter referenced an unknown dimension or an invalid bin."""


@dataclass(frozen=True)
class RangeFilter:
    dimension: str
    lo: float
    hi: float


@dataclass(frozen=True)
class DimensionColumn:
    """One numeric filterable variable: values (NaN = missing) plus its domain."""

    name: str
    values: np.ndarray  # float64
    min: float
    max: float
    bin_count: int

    @classmethod
    def from_values(cls, name: str, values, bin_count: int = 30) -> "DimensionColumn":
        """Domain taken from the data (0..0 when every value is missing)."""
        arr = np.asarray(values, dtype=np.float64)
        finite = arr[~np.isnan(arr)]
        if finite.size:
            lo, hi = float(finite.min()), float(finite.max())
        else:
            lo, hi = 0.0, 0.0
        return cls(name, arr, lo, hi, bin_count)

    def edges(self) -> np.ndarray:
        return bin_edges(self.min, self.max, self.bin_count)


class SelectionMask:
    """Boolean pass/fail over all N objects, packed 64 per word."""

    __slots__ = ("words", "n", "pass_count")

    def __init__(self, words: np.ndarray, n: int, pass_count: int | None = None, kernels=default_kernels):
        self.words = words
        self.n = n
        self.pass_count = kernels.count_mask(words) if pass_count is None else pass_count

    @classmethod
    def all_true(cls, n: int, kernels=default_kernels) -> "SelectionMask":
        return cls(kernels.full_mask(n), n, n)

    @classmethod
    def all_false(cls, n: int, kernels=default_kernels) -> "SelectionMask":
        return cls(kernels.empty_mask(n), n, 0)

    @classmethod
    def from_bool(cls, passing, kernels=default_kernels) -> "SelectionMask":
        arr = np.asarray(passing, dtype=bool)
        return cls(kernels.bool_to_mask(arr), arr.size, int(arr.sum()))

    def to_bool(self, kernels=default_kernels) -> np.ndarray:
        return kernels.mask_to_bool(self.words, self.n)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.to_bool())

    def __and__(self, other: "SelectionMask") -> "SelectionMask":
        if self.n != other.n:
            raise ValueError("mask length mismatch")
        return SelectionMask(default_kernels.and_masks([self.words, other.words]), self.n)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SelectionMask)
            and self.n == other.n
            and bool(np.array_equal(self.words, other.words))
        )

    def __repr__(self) -> str:
        return f"SelectionMask({self.pass_count}/{self.n})"


@dataclass(frozen=True)
class DimensionHistogram:
    dimension: str
    total: tuple[int, ...]
    passing: tuple[int, ...]
    missing_total: int
    missing_passing: int


HistogramSet = dict[str, DimensionHistogram]


def bin_edges(domain_min: float, domain_max: float, bin_count: int) -> np.ndarray:
    """bin_count+1 edges; uniform width, final edge pinned to the exact max."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    if not domain_min <= domain_max:
        raise ValueError(f"invalid domain [{domain_min}, {domain_max}]")
    w = (domain_max - domain_min) / bin_count
    edges = domain_min + w * np.arange(bin_count + 1, dtype=np.float64)
    edges[-1] = domain_max
    return edges


def bin_interval(column: DimensionColumn, b: int) -> tuple[float, float, bool]:
    """Exact edges of bin b and whether the upper edge is inclusive."""
    if not 0 <= b < column.bin_count:
        raise FilterError(f"bin index {b} out of range [0, {column.bin_count})")
    edges = column.edges()
    return float(edges[b]), float(edges[b + 1]), b == column.bin_count - 1


def bin_filter(column: DimensionColumn, b: int) -> RangeFilter:
    """RangeFilter (inclusive bounds) selecting exactly the objects of bin b.

    Half-open bins shave the upper edge to the previous float64, turning
    [lo, hi) into the equivalent inclusive [lo, hi'].
    """
    lo, hi, closed_right = bin_interval(column, b)
    if not closed_right:
        hi = math.nextafter(hi, -math.inf)
    return RangeFilter(column.name, lo, hi)


def is_active(f: RangeFilter, column: DimensionColumn) -> bool:
    return f.lo > column.min or f.hi < column.max


class FilterEngine:
    """Filter evaluator over a fixed column set, with per-filter mask caching.

    Re-filtering after one slider change recomputes only that filter's mask
    and re-ANDs the cached rest. The cache only ever adds entries for
    (dimension, lo, hi) keys whose mask is a pure function of immutable
    columns, so concurrent readers are safe.
    """

    def __init__(self, columns: Iterable[DimensionColumn], n: int | None = None, kernels=default_kernels):
        self.columns: dict[str, DimensionColumn] = {}
        for col in columns:
            self.columns[col.name] = col
        sizes = {c.values.size for c in self.columns.values()}
        if len(sizes) > 1:
            raise ValueError(f"columns disagree on object count: {sorted(sizes)}")
        if n is None:
            if not sizes:
                raise ValueError("need n when there are no columns")
            n = sizes.pop()
        elif sizes and sizes.pop() != n:
            raise ValueError("column length does not match n")
        self.n = n
        self.kernels = kernels
        self._mask_cache: dict[tuple[str, float, float], np.ndarray] = {}
        self._totals: dict[str, tuple[tuple[int, ...], int]] = {}

    @classmethod
    def from_bundle(cls, bundle, kernels=default_kernels) -> "FilterEngine":
        cols = [
            DimensionColumn(
                d.name,
                np.asarray(bundle.columns[d.name], dtype=np.float64),
                d.min,
                d.max,
                d.bin_count,
            )
            for d in bundle.manifest.dimensions
        ]
        return cls(cols, n=bundle.object_count, kernels=kernels)

    def column(self, name: str) -> DimensionColumn:
        try:
            return self.columns[name]
        except KeyError:
            raise FilterError(f"unknown dimension {name!r}") from None

    def filter_mask(self, f: RangeFilter) -> np.ndarray:
        col = self.column(f.dimension)
        key = (f.dimension, float(f.lo), float(f.hi))
        words = self._mask_cache.get(key)
        if words is None:
            words = self.kernels.range_mask(col.values, float(f.lo), float(f.hi))
            self._mask_cache[key] = words
        return words

    def apply(self, ranges: Sequence[RangeFilter]) -> SelectionMask:
        """Conjunction of all active range filters (empty conjunction = all pass)."""
        parts = [self.filter_mask(f) for f in ranges if is_active(f, self.column(f.dimension))]
        if not parts:
            return SelectionMask.all_true(self.n, self.kernels)
        words = parts[0] if len(parts) == 1 else self.kernels.and_masks(parts)
        return SelectionMask(words.copy() if words is parts[0] else words, self.n, kernels=self.kernels)

    def total_histogram(self, name: str) -> tuple[tuple[int, ...], int]:
        cached = self._totals.get(name)
        if cached is None:
            col = self.column(name)
            counts, missing = self.kernels.histogram_total(col.values, col.edges())
            cached = (tuple(int(c) for c in counts), int(missing))
            self._totals[name] = cached
        return cached

    def histograms(self, mask: SelectionMask) -> HistogramSet:
        """Per-dimension total and mask-passing counts (Bin Mode's substrate)."""
        out: HistogramSet = {}
        for name, col in self.columns.items():
            total, missing_total = self.total_histogram(name)
            passing = self.kernels.histogram_passing(col.values, col.edges(), mask.words)
            missing_passing = self.kernels.count_missing_passing(col.values, mask.words)
            out[name] = DimensionHistogram(
                dimension=name,
                total=total,
                passing=tuple(int(c) for c in passing),
                missing_total=missing_total,
                missing_passing=int(missing_passing),
            )
        return out


def apply_range_filters(
    columns: Iterable[DimensionColumn] | Mapping[str, DimensionColumn],
    ranges: Sequence[RangeFilter],
    n: int | None = None,
) -> SelectionMask:
    """One-shot evaluation without an engine (no caching)."""
    cols = columns.values() if isinstance(columns, Mapping) else columns
    return FilterEngine(cols, n=n).apply(ranges)


def histogram(column: DimensionColumn) -> tuple[tuple[int, ...], int]:
    """Total counts per bin and the missing count, over the column's domain."""
    counts, missing = default_kernels.histogram_total(column.values, column.edges())
    return tuple(int(c) for c in counts), int(missing)


def filtered_histograms(
    columns: Iterable[DimensionColumn] | Mapping[str, DimensionColumn],
    mask: SelectionMask,
) -> HistogramSet:
    cols = columns.values() if isinstance(columns, Mapping) else columns
    return FilterEngine(cols, n=mask.n).histograms(mask)
