"""Materialize exploration state: filtered-metadata CSV and projection PNG."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from csn.atlas import AtlasImages
from csn.filters import SelectionMask
from csn.model import Bundle

GREY_ALPHA = 0.4  # opacity of filtered-out thumbnails
# ITU-R BT.709 luma weights; the desaturation recipe is part of the output
# contract, so no library grayscale conversion (those use other weights)
LUMA = (0.2126, 0.7152, 0.0722)
REFERENCE_CANVAS_PX = 1024  # canvas size at which thumbnails draw 1:1


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ViewState:
    """A reproducible view of one projection."""

    projection: str
    center: tuple[float, float] = (0.0, 0.0)
    zoom: float = 1.0
    canvas_px: int = 512
    show_greyed: bool = True
    thumb_px: int | None = None  # explicit draw size; derived from canvas when None

    def validate(self) -> None:
        if not self.zoom > 0:
            raise ExportError(f"zoom must be positive, got {self.zoom}")
        if self.canvas_px < 64:
            raise ExportError(f"canvas_px must be at least 64, got {self.canvas_px}")
        if self.thumb_px is not None and self.thumb_px < 1:
            raise ExportError("thumb_px must be positive")

    def thumb_px_at_zoom(self, atlas_thumb_px: int) -> int:
        """Thumbnail draw size: fixed on screen (zoom spreads positions, not
        sprites, so zooming in resolves overlaps), scaled with the canvas."""
        if self.thumb_px is not None:
            return self.thumb_px
        return max(1, round(atlas_thumb_px * self.canvas_px / REFERENCE_CANVAS_PX))

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ViewState":
        if "projection" not in raw:
            raise ExportError("view needs 'projection'")
        known = {"projection", "center", "zoom", "canvas_px", "show_greyed", "thumb_px"}
        unknown = set(raw) - known
        if unknown:
            raise ExportError(f"unknown view keys: {', '.join(sorted(unknown))}")
        try:
            center = raw.get("center", (0.0, 0.0))
            view = cls(
                projection=str(raw["projection"]),
                center=(float(center[0]), float(center[1])),
                zoom=float(raw.get("zoom", 1.0)),
                canvas_px=int(raw.get("canvas_px", 512)),
                show_greyed=bool(raw.get("show_greyed", True)),
                thumb_px=int(raw["thumb_px"]) if raw.get("thumb_px") is not None else None,
            )
        except (TypeError, ValueError, IndexError) as exc:
            raise ExportError(f"malformed view: {exc}") from exc
        view.validate()
        return view


def export_csv(
    field_names: Sequence[str],
    columns: Mapping[str, Sequence[str]],
    mask: SelectionMask,
) -> bytes:
    """RFC-4180 CSV of mask-true rows: header `index,<fields...>`, ascending index."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["index", *field_names])
    cols = [columns[name] for name in field_names]
    for i in mask.indices():
        writer.writerow([i, *(col[i] for col in cols)])
    return buf.getvalue().encode("utf-8")


def world_to_pixel(
    coords: np.ndarray, center: tuple[float, float], zoom: float, canvas_px: int
) -> np.ndarray:
    """Normalized [-1,1] coordinates to pixel centers; y grows downward."""
    half = canvas_px / 2.0
    px = (coords[:, 0].astype(np.float64) - center[0]) * zoom * half + half
    py = half - (coords[:, 1].astype(np.float64) - center[1]) * zoom * half
    return np.column_stack([px, py])


def _greyed(cell: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rgb = cell[:, :, :3].astype(np.float64)
    luma = rgb[:, :, 0] * LUMA[0] + rgb[:, :, 1] * LUMA[1] + rgb[:, :, 2] * LUMA[2]
    grey = np.repeat(luma[:, :, None], 3, axis=2)
    alpha = cell[:, :, 3].astype(np.float64) / 255.0 * GREY_ALPHA
    return grey, alpha


def _blit(canvas: np.ndarray, rgb: np.ndarray, alpha: np.ndarray, x0: int, y0: int) -> None:
    h, w = rgb.shape[:2]
    ch, cw = canvas.shape[:2]
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1, dy1 = min(cw, x0 + w), min(ch, y0 + h)
    if dx1 <= dx0 or dy1 <= dy0:
        return
    src_rgb = rgb[sy0 : sy0 + (dy1 - dy0), sx0 : sx0 + (dx1 - dx0)]
    src_a = alpha[sy0 : sy0 + (dy1 - dy0), sx0 : sx0 + (dx1 - dx0), None]
    dst = canvas[dy0:dy1, dx0:dx1].astype(np.float64)
    canvas[dy0:dy1, dx0:dx1] = np.rint(src_rgb * src_a + dst * (1.0 - src_a)).astype(np.uint8)


def render_view(bundle: Bundle, atlas: AtlasImages, mask: SelectionMask, view: ViewState) -> np.ndarray:
    """Rasterize the view to an RGB pixel array (white background)."""
    view.validate()
    if view.projection not in bundle.points:
        raise ExportError(
            f"unknown projection {view.projection!r}; have {sorted(bundle.points)}"
        )
    coords = bundle.points[view.projection]
    n = bundle.object_count
    canvas = np.full((view.canvas_px, view.canvas_px, 3), 255, dtype=np.uint8)
    if n == 0:
        return canvas

    pixels = world_to_pixel(coords, view.center, view.zoom, view.canvas_px)
    t = view.thumb_px_at_zoom(atlas.thumb_px)
    passing = mask.to_bool()
    order = np.argsort(bundle.depths(view.projection), kind="stable")
    half = t / 2.0
    c = view.canvas_px

    for i in order:
        selected = bool(passing[i])
        if not selected and not view.show_greyed:
            continue
        x0 = int(round(pixels[i, 0] - half))
        y0 = int(round(pixels[i, 1] - half))
        if x0 >= c or y0 >= c or x0 + t <= 0 or y0 + t <= 0:
            continue
        cell = atlas.cell(int(i))
        if t != atlas.thumb_px:
            img = Image.fromarray(cell, "RGBA").resize((t, t), Image.NEAREST)
            cell = np.asarray(img, dtype=np.uint8)
        if selected:
            rgb = cell[:, :, :3].astype(np.float64)
            alpha = cell[:, :, 3].astype(np.float64) / 255.0
        else:
            rgb, alpha = _greyed(cell)
        _blit(canvas, rgb, alpha, x0, y0)
    return canvas


def render_png(bundle: Bundle, atlas: AtlasImages, mask: SelectionMask, view: ViewState) -> bytes:
    """PNG bytes of the rendered view; identical inputs yield identical pixels."""
    canvas = render_view(bundle, atlas, mask, view)
    buf = io.BytesIO()
    Image.fromarray(canvas, "RGB").save(buf, format="PNG")
    return buf.getvalue()
