"""Thumbnail atlas packing: fixed-size square cells on square pages.

Cells are laid out row-major. With cols = page_px / thumb_px and
per_page = cols**2, object i lands on page i // per_page at column
i % cols, row (i % per_page) // cols. Unused cells on the final page
stay fully transparent.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image


def grid_cols(thumb_px: int, page_px: int) -> int:
    if thumb_px <= 0 or page_px <= 0 or page_px % thumb_px != 0:
        raise ValueError(f"thumb_px {thumb_px} must divide page_px {page_px}")
    return page_px // thumb_px


def cells_per_page(thumb_px: int, page_px: int) -> int:
    return grid_cols(thumb_px, page_px) ** 2


def cell_of(index: int, thumb_px: int, page_px: int) -> tuple[int, int, int]:
    """Map an object index to (page, col, row)."""
    cols = grid_cols(thumb_px, page_px)
    per_page = cols * cols
    slot = index % per_page
    return index // per_page, slot % cols, slot // cols


def cell_box(index: int, thumb_px: int, page_px: int) -> tuple[int, tuple[int, int, int, int]]:
    """Map an object index to (page, pixel box) with box = (left, top, right, bottom)."""
    page, col, row = cell_of(index, thumb_px, page_px)
    left = col * thumb_px
    top = row * thumb_px
    return page, (left, top, left + thumb_px, top + thumb_px)


def make_thumbnail(image: Image.Image, thumb_px: int) -> Image.Image:
    """Aspect-preserving downscale so the short side is thumb_px, then center-crop."""
    if thumb_px <= 0:
        raise ValueError("thumb_px must be positive")
    img = image.convert("RGBA")
    w, h = img.size
    if w == 0 or h == 0:
        raise ValueError("cannot thumbnail an empty image")
    scale = thumb_px / min(w, h)
    new_w = max(thumb_px, round(w * scale))
    new_h = max(thumb_px, round(h * scale))
    if (new_w, new_h) != (w, h):
        img = img.resize((new_w, new_h), Image.LANCZOS)
    left = (new_w - thumb_px) // 2
    top = (new_h - thumb_px) // 2
    return img.crop((left, top, left + thumb_px, top + thumb_px))


def build_atlas(
    thumbnails: Sequence[Image.Image], thumb_px: int, page_px: int
) -> list[Image.Image]:
    """Pack square thumbnails into RGBA pages; empty input yields zero pages."""
    per_page = cells_per_page(thumb_px, page_px)
    pages: list[Image.Image] = []
    for i, thumb in enumerate(thumbnails):
        if thumb.size != (thumb_px, thumb_px):
            raise ValueError(
                f"thumbnail {i} is {thumb.size[0]}x{thumb.size[1]}, expected {thumb_px}x{thumb_px}"
            )
        if i % per_page == 0:
            pages.append(Image.new("RGBA", (page_px, page_px), (0, 0, 0, 0)))
        _, box = cell_box(i, thumb_px, page_px)
        pages[-1].paste(thumb.convert("RGBA"), box[:2])
    return pages


def extract_cell(page: Image.Image, index: int, thumb_px: int) -> Image.Image:
    """Inverse of build_atlas placement: crop object `index`'s cell from its page."""
    _, box = cell_box(index % cells_per_page(thumb_px, page.size[0]), thumb_px, page.size[0])
    return page.crop(box)


class AtlasImages:
    """Loaded atlas pages with per-object cell access as RGBA arrays."""

    def __init__(self, pages: Iterable[Image.Image], thumb_px: int):
        self.pages = [np.asarray(p.convert("RGBA"), dtype=np.uint8) for p in pages]
        self.thumb_px = thumb_px
        self.page_px = self.pages[0].shape[0] if self.pages else 0

    @classmethod
    def from_files(cls, paths: Iterable[str | Path], thumb_px: int) -> "AtlasImages":
        return cls([Image.open(p) for p in paths], thumb_px)

    def cell(self, index: int) -> np.ndarray:
        """RGBA pixels of object `index`, shape (thumb_px, thumb_px, 4)."""
        page, (left, top, right, bottom) = cell_box(index, self.thumb_px, self.page_px)
        return self.pages[page][top:bottom, left:right]


def encode_png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
