"""Kernel backend selection.

The compiled extension (``csn._native``) is used when built; otherwise the
numpy fallback (``csn._kernels_py``). Both expose the same functions and
produce bit-identical masks and counts. Set ``CSN_KERNELS=python`` or
``CSN_KERNELS=native`` to force a backend (forcing ``native`` raises if the
extension is missing).
"""

from __future__ import annotations

import os
from types import ModuleType

from csn import _kernels_py


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "native":
        from csn import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        get_backend("native")
        names.insert(0, "native")
    except ImportError:
        pass
    return names


_forced = os.environ.get("CSN_KERNELS", "").strip().lower()
if _forced:
    _impl = get_backend(_forced)
else:
    try:
        _impl = get_backend("native")
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND_NAME

words_for = _impl.words_for
bool_to_mask = _impl.bool_to_mask
mask_to_bool = _impl.mask_to_bool
full_mask = _impl.full_mask
empty_mask = _impl.empty_mask
count_mask = _impl.count_mask
range_mask = _impl.range_mask
and_masks = _impl.and_masks
histogram_total = _impl.histogram_total
histogram_passing = _impl.histogram_passing
count_missing_passing = _impl.count_missing_passing
