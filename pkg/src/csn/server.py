"""HTTP service over dataset bundles: assets, filtering, exports, static ui.

Bundles are immutable after startup, so every GET is cacheable and request
handling shares them read-only. Filtering is stateless per request; the
per-filter mask cache inside FilterEngine only ever adds entries derived
from immutable columns, which keeps concurrent reads safe.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse, Response
from pydantic import BaseModel, Field

from csn import exports
from csn.atlas import AtlasImages
from csn.filters import FilterEngine, FilterError, RangeFilter, SelectionMask
from csn.model import Bundle, BundleError
from csn.query import MetadataTable, ParseError, QueryFieldError, evaluate, parse_text


def rle_encode(passing: np.ndarray) -> list[int]:
    """Alternating run lengths, starting with the false-run (possibly 0)."""
    arr = np.asarray(passing, dtype=bool)
    if arr.size == 0:
        return []
    switches = np.flatnonzero(np.diff(arr)) + 1
    bounds = np.concatenate([[0], switches, [arr.size]])
    runs = np.diff(bounds).tolist()
    if arr[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], n: int) -> np.ndarray:
    """Inverse of rle_encode; validates that the runs cover exactly n entries."""
    out = np.zeros(n, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if run < 0:
            raise ValueError("negative run length")
        if value:
            out[pos : pos + run] = True
        pos += run
        value = not value
    if pos != n:
        raise ValueError(f"run lengths cover {pos} entries, expected {n}")
    return out


class RangeIn(BaseModel):
    dimension: str
    lo: float
    hi: float


class FilterIn(BaseModel):
    ranges: list[RangeIn] = Field(default_factory=list)
    query: str = ""


class ExportPngIn(FilterIn):
    view: dict = Field(default_factory=dict)


class Dataset:
    """One loaded bundle with its filter engine, query table, and atlas."""

    def __init__(self, dataset_id: str, bundle: Bundle):
        self.id = dataset_id
        self.bundle = bundle
        self.engine = FilterEngine.from_bundle(bundle)
        self.table = MetadataTable(bundle.metadata)
        pages = [bundle.atlas_page_path(p) for p in range(bundle.manifest.atlas.page_count)]
        self.atlas = AtlasImages.from_files(pages, bundle.manifest.atlas.thumb_px)

    def filter_state(self, req: FilterIn) -> tuple[SelectionMask, SelectionMask, list[str]]:
        """(final mask, ranges-only mask, query errors); unknown dimensions raise."""
        ranges = [RangeFilter(r.dimension, r.lo, r.hi) for r in req.ranges]
        for r in ranges:
            if r.lo > r.hi:
                raise FilterError(f"dimension {r.dimension!r}: lo {r.lo} > hi {r.hi}")
        range_mask = self.engine.apply(ranges)
        query_errors: list[str] = []
        mask = range_mask
        if req.query.strip():
            try:
                ast = parse_text(req.query)
                mask = range_mask & evaluate(ast, self.table, n=self.bundle.object_count)
            except (ParseError, QueryFieldError) as exc:
                query_errors.append(str(exc))
        return mask, range_mask, query_errors


def discover_bundles(root: str | Path) -> list[Path]:
    """Immediate subdirectories holding a manifest.json; or root itself."""
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [root]
    found = sorted(p.parent for p in root.glob("*/manifest.json"))
    if not found:
        raise BundleError(f"no bundles under {root}")
    return found


def load_datasets(paths: Sequence[str | Path]) -> dict[str, Dataset]:
    datasets: dict[str, Dataset] = {}
    for path in paths:
        path = Path(path)
        try:
            bundle = Bundle.load(path)
            bundle.manifest.validate(path)
        except BundleError as exc:
            raise BundleError(f"bundle {path}: {exc}") from exc
        dataset_id = path.name
        if dataset_id in datasets:
            raise BundleError(f"duplicate dataset id {dataset_id!r}")
        datasets[dataset_id] = Dataset(dataset_id, bundle)
    return datasets


_PLACEHOLDER = """<!doctype html>
<html><head><title>csn</title></head>
<body><h1>csn server</h1>
<p>No ui build found. The API lives under <a href="/api/datasets">/api/datasets</a>.</p>
</body></html>"""


def create_app(bundles: str | Path | Sequence[str | Path], ui_dir: str | Path | None = None) -> FastAPI:
    if isinstance(bundles, (str, Path)):
        paths = discover_bundles(bundles)
    else:
        paths = [Path(p) for p in bundles]
    datasets = load_datasets(paths)

    app = FastAPI(title="csn", docs_url=None, redoc_url=None)
    app.state.datasets = datasets

    def dataset(dataset_id: str) -> Dataset:
        ds = datasets.get(dataset_id)
        if ds is None:
            raise HTTPException(404, f"unknown dataset {dataset_id!r}")
        return ds

    @app.get("/api/datasets")
    def list_datasets():
        return [
            {
                "id": ds.id,
                "name": ds.bundle.manifest.name,
                "object_count": ds.bundle.object_count,
            }
            for ds in datasets.values()
        ]

    @app.get("/api/datasets/{dataset_id}/manifest")
    def manifest(dataset_id: str):
        ds = dataset(dataset_id)
        return {"id": ds.id, **ds.bundle.manifest.to_dict()}

    def binary_or_json(array: np.ndarray, fmt: str | None):
        if fmt == "json":
            return JSONResponse(array.tolist())
        return Response(array.tobytes(), media_type="application/octet-stream")

    @app.get("/api/datasets/{dataset_id}/points/{projection}")
    def points(dataset_id: str, projection: str, format: str | None = None):
        ds = dataset(dataset_id)
        coords = ds.bundle.points.get(projection)
        if coords is None:
            raise HTTPException(404, f"unknown projection {projection!r}")
        return binary_or_json(coords, format)

    @app.get("/api/datasets/{dataset_id}/columns/{dimension}")
    def columns(dataset_id: str, dimension: str, format: str | None = None):
        ds = dataset(dataset_id)
        values = ds.bundle.columns.get(dimension)
        if values is None:
            raise HTTPException(404, f"unknown dimension {dimension!r}")
        if format == "json":
            # JSON has no NaN literal; missing values travel as nulls
            return JSONResponse([None if np.isnan(v) else float(v) for v in values])
        return Response(values.tobytes(), media_type="application/octet-stream")

    @app.get("/api/datasets/{dataset_id}/atlas/{page}")
    def atlas_page(dataset_id: str, page: int):
        ds = dataset(dataset_id)
        if not 0 <= page < ds.bundle.manifest.atlas.page_count:
            raise HTTPException(404, f"atlas page {page} out of range")
        return FileResponse(ds.bundle.atlas_page_path(page), media_type="image/png")

    @app.get("/api/datasets/{dataset_id}/metadata")
    def metadata(dataset_id: str, format: str | None = None):
        ds = dataset(dataset_id)
        if format == "json":
            return JSONResponse(
                {
                    "fields": ds.bundle.manifest.field_names(),
                    "columns": ds.bundle.metadata,
                }
            )
        return Response(
            (ds.bundle.root / "metadata.csv").read_bytes(), media_type="text/csv"
        )

    @app.post("/api/datasets/{dataset_id}/filter")
    def filter_endpoint(dataset_id: str, req: FilterIn):
        ds = dataset(dataset_id)
        try:
            mask, _, query_errors = ds.filter_state(req)
        except FilterError as exc:
            raise HTTPException(400, str(exc)) from exc
        histograms = ds.engine.histograms(mask)
        return {
            "mask": rle_encode(mask.to_bool()),
            "pass_count": mask.pass_count,
            "histograms": {
                name: {
                    "total": list(h.total),
                    "passing": list(h.passing),
                    "missing_total": h.missing_total,
                    "missing_passing": h.missing_passing,
                }
                for name, h in histograms.items()
            },
            "query_errors": query_errors,
        }

    @app.post("/api/datasets/{dataset_id}/export/csv")
    def export_csv_endpoint(dataset_id: str, req: FilterIn):
        ds = dataset(dataset_id)
        try:
            mask, _, query_errors = ds.filter_state(req)
        except FilterError as exc:
            raise HTTPException(400, str(exc)) from exc
        if query_errors:
            raise HTTPException(400, "; ".join(query_errors))
        body = exports.export_csv(ds.bundle.manifest.field_names(), ds.bundle.metadata, mask)
        return Response(
            body,
            media_type="text/csv",
            headers={"Content-Disposition": "attachment; filename=export.csv"},
        )

    @app.post("/api/datasets/{dataset_id}/export/png")
    def export_png_endpoint(dataset_id: str, req: ExportPngIn):
        ds = dataset(dataset_id)
        try:
            mask, _, query_errors = ds.filter_state(req)
        except FilterError as exc:
            raise HTTPException(400, str(exc)) from exc
        if query_errors:
            raise HTTPException(400, "; ".join(query_errors))
        try:
            view = exports.ViewState.from_dict(req.view)
            body = exports.render_png(ds.bundle, ds.atlas, mask, view)
        except exports.ExportError as exc:
            raise HTTPException(400, str(exc)) from exc
        return Response(
            body,
            media_type="image/png",
            headers={"Content-Disposition": "attachment; filename=export.png"},
        )

    ui_path = Path(ui_dir) if ui_dir else None
    if ui_path and ui_path.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _PLACEHOLDER

    return app


def serve(
    bundles: str | Path | Sequence[str | Path],
    port: int = 8700,
    host: str = "127.0.0.1",
    ui_dir: str | Path | None = None,
) -> None:
    """Validate all bundles, then serve until interrupted."""
    import uvicorn

    app = create_app(bundles, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
