"""Pure-numpy filter kernels: the fallback backend.

Same contracts as the compiled ``csn._native`` extension; ``csn.kernels``
picks one at import. Masks are packed little-endian: bit ``i`` of word ``w``
(LSB first) is object ``w * 64 + i``; unused tail bits of the last word are
always zero. Column values arrive as float64 (promoted once by the caller)
so range and bin-edge comparisons are exact regardless of the float32
storage format.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def words_for(n: int) -> int:
    return (n + 63) >> 6


def bool_to_mask(passing: np.ndarray) -> np.ndarray:
    passing = np.ascontiguousarray(passing, dtype=bool)
    nwords = words_for(passing.size)
    packed = np.packbits(passing, bitorder="little")
    buf = np.zeros(nwords * 8, dtype=np.uint8)
    buf[: packed.size] = packed
    return buf.view(np.uint64)


def mask_to_bool(words: np.ndarray, n: int) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), bitorder="little", count=n)
    return bits.astype(bool)


def full_mask(n: int) -> np.ndarray:
    words = np.full(words_for(n), np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    _clear_tail(words, n)
    return words


def empty_mask(n: int) -> np.ndarray:
    return np.zeros(words_for(n), dtype=np.uint64)


def _clear_tail(words: np.ndarray, n: int) -> None:
    rem = n & 63
    if words.size and rem:
        words[-1] &= np.uint64((1 << rem) - 1)


def count_mask(words: np.ndarray) -> int:
    return int(np.bitwise_count(words).sum())


def range_mask(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Packed mask of objects with a non-missing value inside [lo, hi]."""
    passing = (values >= lo) & (values <= hi)  # NaN fails both
    return bool_to_mask(passing)


def and_masks(masks: list[np.ndarray]) -> np.ndarray:
    out = masks[0].copy()
    for m in masks[1:]:
        np.bitwise_and(out, m, out)
    return out


def histogram_total(values: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, int]:
    """Counts per bin plus the missing-value count.

    Bin b is [edges[b], edges[b+1]) except the last, which is closed on the
    right; values outside [edges[0], edges[-1]] are not counted. A degenerate
    domain (all edges equal) puts every counted value in bin 0.
    """
    nbins = edges.size - 1
    valid = ~np.isnan(values)
    missing = int(values.size - np.count_nonzero(valid))
    v = values[valid]
    v = v[(v >= edges[0]) & (v <= edges[-1])]
    if edges[-1] == edges[0]:
        counts = np.zeros(nbins, dtype=np.int64)
        counts[0] = v.size
        return counts, missing
    idx = np.searchsorted(edges, v, side="right") - 1
    np.clip(idx, 0, nbins - 1, out=idx)
    return np.bincount(idx, minlength=nbins).astype(np.int64), missing


def histogram_passing(values: np.ndarray, edges: np.ndarray, words: np.ndarray) -> np.ndarray:
    """histogram_total restricted to mask-true objects (missing not reported)."""
    nbins = edges.size - 1
    keep = mask_to_bool(words, values.size) & ~np.isnan(values)
    v = values[keep]
    v = v[(v >= edges[0]) & (v <= edges[-1])]
    if edges[-1] == edges[0]:
        counts = np.zeros(nbins, dtype=np.int64)
        counts[0] = v.size
        return counts
    idx = np.searchsorted(edges, v, side="right") - 1
    np.clip(idx, 0, nbins - 1, out=idx)
    return np.bincount(idx, minlength=nbins).astype(np.int64)


def count_missing_passing(values: np.ndarray, words: np.ndarray) -> int:
    """Mask-true objects whose value is missing."""
    keep = mask_to_bool(words, values.size)
    return int(np.count_nonzero(keep & np.isnan(values)))
