"""Ingest pipeline: metadata CSV + images + optional embeddings -> bundle.

Config is a JSON document mirroring IngestConfig. Relative paths inside the
config resolve against the config file's directory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from csn import atlas as atlas_mod
from csn import dimred
from csn.model import (
    ATLAS_DIR,
    COLUMNS_DIR,
    FIELD_KINDS,
    METADATA_NAME,
    POINTS_DIR,
    AtlasDescriptor,
    CollectionManifest,
    DimensionDescriptor,
    FieldDescriptor,
    ProjectionDescriptor,
    SubsetInfo,
    load_manifest,
    normalize_projection,
    save_manifest,
    write_f32,
)
from csn.query import parse_decimal

MAX_CATEGORICAL_VALUES = 256  # beyond this a field must be freetext


class IngestError(ValueError):
    """Configuration or pipeline failure; message is the full explanation."""


@dataclass(frozen=True)
class DimensionSpec:
    source: str | int  # metadata column name, or embedding column index
    label: str | None = None
    bin_count: int = 30
    name: str | None = None

    def resolved_name(self) -> str:
        if self.name:
            return self.name
        return self.source if isinstance(self.source, str) else f"emb_{self.source}"

    def resolved_label(self) -> str:
        return self.label if self.label else self.resolved_name()


@dataclass(frozen=True)
class ProjectionSpec:
    method: str  # pca | tsne | axis | import
    name: str | None = None
    perplexity: float = 30.0
    iterations: int = 1000
    seed: int = 0
    x: str | None = None  # axis method: dimension column names
    y: str | None = None
    path: str | None = None  # import method
    dims: int | None = None  # import method, raw float32 files only

    def resolved_name(self) -> str:
        if self.name:
            return self.name
        if self.method == "axis":
            return f"axis_{self.x}_{self.y}"
        return self.method


@dataclass
class IngestConfig:
    metadata_path: Path
    images_path: Path | None = None  # directory; image_column may also hold full paths
    image_column: str = "filename"
    embeddings_path: Path | None = None
    embeddings_shape: tuple[int, int] | None = None  # raw float32 files only
    dimension_columns: list[DimensionSpec] = field(default_factory=list)
    field_kinds: dict[str, str] = field(default_factory=dict)
    thumb_px: int = 64
    page_px: int = 1024
    subset: tuple[int, int] | None = None  # (k, seed)
    projections_requested: list[ProjectionSpec] = field(default_factory=list)
    name: str = ""

    def validate(self) -> None:
        if self.thumb_px <= 0 or self.page_px % self.thumb_px != 0:
            raise IngestError(
                f"thumb_px {self.thumb_px} must be positive and divide page_px {self.page_px}"
            )
        for kind in self.field_kinds.values():
            if kind not in FIELD_KINDS:
                raise IngestError(f"unknown field kind {kind!r}; expected one of {FIELD_KINDS}")
        for spec in self.dimension_columns:
            if spec.bin_count < 1:
                raise IngestError(f"dimension {spec.resolved_name()!r}: bin_count must be >= 1")
        for spec in self.projections_requested:
            if spec.method not in ("pca", "tsne", "axis", "import"):
                raise IngestError(f"unknown projection method {spec.method!r}")
            if spec.method == "axis" and (not spec.x or not spec.y):
                raise IngestError("axis projection needs 'x' and 'y' dimension names")
            if spec.method == "import" and not spec.path:
                raise IngestError("import projection needs 'path'")
        if self.subset is not None and self.subset[0] < 1:
            raise IngestError("subset k must be positive")


_CONFIG_KEYS = {
    "metadata_path", "images_path", "image_column", "embeddings_path",
    "embeddings_shape", "dimension_columns", "field_kinds", "thumb_px",
    "page_px", "subset", "projections_requested", "name",
}


def load_config(path: str | Path) -> IngestConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise IngestError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise IngestError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "metadata_path" not in raw:
        raise IngestError("config needs 'metadata_path'")
    base = path.parent

    def rel(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    dims = [
        DimensionSpec(
            source=d["source"],
            label=d.get("label"),
            bin_count=d.get("bin_count", 30),
            name=d.get("name"),
        )
        for d in raw.get("dimension_columns", [])
    ]
    projections = []
    for p in raw.get("projections_requested", []):
        spec = ProjectionSpec(
            method=p.get("method", ""),
            name=p.get("name"),
            perplexity=p.get("perplexity", 30.0),
            iterations=p.get("iterations", 1000),
            seed=p.get("seed", 0),
            x=p.get("x"),
            y=p.get("y"),
            path=str(rel(p["path"])) if p.get("path") else None,
            dims=p.get("dims"),
        )
        projections.append(spec)
    subset = None
    if raw.get("subset"):
        s = raw["subset"]
        subset = (int(s["k"]), int(s.get("seed", 0)))
    config = IngestConfig(
        metadata_path=rel(raw["metadata_path"]),
        images_path=rel(raw["images_path"]) if raw.get("images_path") else None,
        image_column=raw.get("image_column", "filename"),
        embeddings_path=rel(raw["embeddings_path"]) if raw.get("embeddings_path") else None,
        embeddings_shape=tuple(raw["embeddings_shape"]) if raw.get("embeddings_shape") else None,
        dimension_columns=dims,
        field_kinds=dict(raw.get("field_kinds", {})),
        thumb_px=int(raw.get("thumb_px", 64)),
        page_px=int(raw.get("page_px", 1024)),
        subset=subset,
        projections_requested=projections,
        name=raw.get("name", path.stem),
    )
    config.validate()
    return config


def sample_subset(n_total: int, k: int, seed: int) -> list[int]:
    """k distinct indices from range(n_total), uniform, sorted ascending.

    Pinned algorithm so subsets reproduce anywhere: a partial Fisher-Yates
    shuffle of [0..n_total) where step i swaps position i with position
    j = integers(i, n_total) drawn from numpy's PCG64 generator seeded with
    `seed`; the first k positions are the sample.
    """
    if not 0 < k <= n_total:
        raise ValueError(f"k must be in [1, {n_total}], got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.arange(n_total)
    for i in range(k):
        j = int(rng.integers(i, n_total))
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(int(v) for v in idx[:k])


@dataclass(frozen=True)
class ColumnSummary:
    min: float
    max: float
    missing_count: int
    degenerate: bool  # every value missing


def summarize_column(values: Sequence[float]) -> ColumnSummary:
    """Domain and missing count over a numeric column; NaN marks missing."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 1:
        raise ValueError("summarize_column needs at least one value")
    finite = arr[np.isfinite(arr)]
    missing = int(arr.size - finite.size)
    if finite.size == 0:
        return ColumnSummary(0.0, 0.0, missing, True)
    return ColumnSummary(float(finite.min()), float(finite.max()), missing, False)


def load_metadata_csv(path: str | Path) -> tuple[list[str], dict[str, list[str]]]:
    """Field names and columns of an RFC-4180 CSV with a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise IngestError(f"cannot read metadata {path}: {exc}") from exc
    if not header:
        raise IngestError(f"metadata {path} has no header row")
    if len(set(header)) != len(header):
        raise IngestError(f"metadata {path} has duplicate column names")
    columns: dict[str, list[str]] = {name: [] for name in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestError(
                f"metadata {path} row {i + 1}: {len(row)} cells, expected {len(header)}"
            )
        for name, cell in zip(header, row):
            columns[name].append(cell)
    return header, columns


def load_embeddings(path: str | Path, shape: tuple[int, int] | None = None) -> np.ndarray:
    """N x D reals from a delimited text file, or raw float32 LE when shape is given."""
    path = Path(path)
    if shape is not None:
        n, d = shape
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != n * d:
            raise IngestError(
                f"embeddings {path}: {raw.size} float32 values, expected {n}x{d}={n * d}"
            )
        return raw.astype(np.float64).reshape(n, d)
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise IngestError(f"embeddings {path}: {exc}") from exc
    return arr


def _numeric_column(values: Sequence[str]) -> np.ndarray:
    return np.array(
        [x if (x := parse_decimal(v)) is not None else np.nan for v in values],
        dtype=np.float64,
    )


def _field_descriptor(name: str, kind: str, values: Sequence[str]) -> FieldDescriptor:
    if kind != "categorical":
        return FieldDescriptor(name=name, kind=kind)
    distinct = sorted({v.strip() for v in values} - {""})
    if len(distinct) > MAX_CATEGORICAL_VALUES:
        raise IngestError(
            f"field {name!r}: {len(distinct)} distinct values exceed the categorical "
            f"cap of {MAX_CATEGORICAL_VALUES}; declare it freetext"
        )
    return FieldDescriptor(name=name, kind="categorical", values=tuple(distinct))


def _image_path(config: IngestConfig, cell: str) -> Path:
    p = Path(cell)
    if config.images_path is not None and not p.is_absolute():
        return config.images_path / p
    return p


def _projection_source(
    embeddings: np.ndarray | None, dim_values: dict[str, np.ndarray], method: str
) -> np.ndarray:
    if embeddings is not None:
        return embeddings
    if dim_values:
        matrix = np.column_stack(list(dim_values.values()))
        if np.isnan(matrix).any():
            raise IngestError(
                f"{method} projection: dimension columns contain missing values "
                "and no embeddings were provided"
            )
        return matrix
    raise IngestError(f"{method} projection needs embeddings or dimension columns")


def ingest(config: IngestConfig, out_dir: str | Path) -> Path:
    """Run the full pipeline and write a validated bundle to out_dir."""
    config.validate()
    out = Path(out_dir)

    header, columns = load_metadata_csv(config.metadata_path)
    n_source = len(next(iter(columns.values()))) if columns else 0
    if n_source == 0:
        raise IngestError("metadata has no data rows")

    embeddings = None
    if config.embeddings_path is not None:
        embeddings = load_embeddings(config.embeddings_path, config.embeddings_shape)
        if embeddings.shape[0] != n_source:
            raise IngestError(
                f"metadata has {n_source} rows but embeddings have {embeddings.shape[0]}"
            )

    # subsetting: slice all per-object inputs, remember provenance
    subset_info = None
    if config.subset is not None:
        k, seed = config.subset
        if k > n_source:
            raise IngestError(f"subset k={k} exceeds {n_source} source rows")
        indices = sample_subset(n_source, k, seed)
        columns = {name: [vals[i] for i in indices] for name, vals in columns.items()}
        if embeddings is not None:
            embeddings = embeddings[indices]
        if "parent_index" in columns:
            raise IngestError("metadata already has a 'parent_index' column")
        columns["parent_index"] = [str(i) for i in indices]
        header = header + ["parent_index"]
        subset_info = SubsetInfo(seed=seed, parent_count=n_source)
    else:
        indices = list(range(n_source))
    n = len(indices)

    for field_name in config.field_kinds:
        if field_name not in columns:
            raise IngestError(f"field_kinds names unknown column {field_name!r}")
    fields = [
        _field_descriptor(name, config.field_kinds.get(name, "info"), columns[name])
        for name in header
    ]
    cluster_fields = [f.name for f in fields if f.kind == "categorical"]

    # dimension columns from metadata or embedding features
    dim_values: dict[str, np.ndarray] = {}
    dim_descriptors: list[DimensionDescriptor] = []
    for spec in config.dimension_columns:
        dim_name = spec.resolved_name()
        if isinstance(spec.source, str):
            if spec.source not in columns:
                raise IngestError(f"dimension source column {spec.source!r} not in metadata")
            values = _numeric_column(columns[spec.source])
        else:
            if embeddings is None:
                raise IngestError(
                    f"dimension {dim_name!r} references embedding column {spec.source} "
                    "but no embeddings were provided"
                )
            if not 0 <= spec.source < embeddings.shape[1]:
                raise IngestError(
                    f"dimension {dim_name!r}: embedding column {spec.source} out of "
                    f"range [0, {embeddings.shape[1]})"
                )
            values = embeddings[:, spec.source].copy()
        summary = summarize_column(values)
        dim_values[dim_name] = values
        dim_descriptors.append(
            DimensionDescriptor(
                name=dim_name,
                label=spec.resolved_label(),
                path=f"{COLUMNS_DIR}/{dim_name}.bin",
                min=summary.min,
                max=summary.max,
                bin_count=spec.bin_count,
                degenerate=summary.degenerate,
            )
        )

    # thumbnails; failures name the object
    if config.image_column not in columns:
        raise IngestError(f"image column {config.image_column!r} not in metadata")
    thumbs = []
    for row, cell in enumerate(columns[config.image_column]):
        path = _image_path(config, cell)
        try:
            with Image.open(path) as img:
                thumbs.append(atlas_mod.make_thumbnail(img, config.thumb_px))
        except (OSError, ValueError) as exc:
            raise IngestError(f"object {row} (source row {indices[row]}): cannot read image {path}: {exc}") from exc
    pages = atlas_mod.build_atlas(thumbs, config.thumb_px, config.page_px)
    per_page = atlas_mod.cells_per_page(config.thumb_px, config.page_px)

    # projections
    proj_tables: dict[str, np.ndarray] = {}
    proj_descriptors: list[ProjectionDescriptor] = []
    for spec in config.projections_requested:
        proj_name = spec.resolved_name()
        if proj_name in proj_tables:
            raise IngestError(f"duplicate projection name {proj_name!r}")
        if spec.method == "pca":
            source = _projection_source(embeddings, dim_values, "pca")
            coords = normalize_projection(dimred.pca(source, 2).coords)
        elif spec.method == "tsne":
            source = _projection_source(embeddings, dim_values, "tsne")
            params = dimred.TsneParams(
                perplexity=spec.perplexity, iterations=spec.iterations, seed=spec.seed
            )
            coords = normalize_projection(dimred.tsne(source, params).coords)
        elif spec.method == "axis":
            for axis_name in (spec.x, spec.y):
                if axis_name not in dim_values:
                    raise IngestError(
                        f"axis projection references unknown dimension {axis_name!r}"
                    )
            coords = dimred.axis_projection(dim_values[spec.x], dim_values[spec.y]).coords
        else:
            # an imported file may cover the parent collection; slice it with
            # the same subset indices applied to metadata and embeddings
            if n_source != n:
                raw = dimred.load_projection_rows(spec.path, dims=spec.dims)
                if raw.shape[0] == n_source:
                    coords = normalize_projection(raw[indices])
                elif raw.shape[0] == n:
                    coords = normalize_projection(raw)
                else:
                    raise IngestError(
                        f"import {spec.path}: {raw.shape[0]} rows match neither "
                        f"the subset ({n}) nor the source ({n_source})"
                    )
            else:
                coords = dimred.import_projection(spec.path, expected_n=n, dims=spec.dims)
        proj_tables[proj_name] = coords
        proj_descriptors.append(
            ProjectionDescriptor(
                name=proj_name,
                path=f"{POINTS_DIR}/{proj_name}.bin",
                dims=coords.shape[1],
            )
        )

    manifest = CollectionManifest(
        name=config.name or config.metadata_path.stem,
        object_count=n,
        projections=proj_descriptors,
        dimensions=dim_descriptors,
        metadata_fields=fields,
        cluster_fields=cluster_fields,
        atlas=AtlasDescriptor(
            thumb_px=config.thumb_px,
            page_px=config.page_px,
            per_page=per_page,
            page_count=len(pages),
        ),
        subset=subset_info,
    )

    # all computed; now write the bundle
    out.mkdir(parents=True, exist_ok=True)
    (out / POINTS_DIR).mkdir(exist_ok=True)
    (out / COLUMNS_DIR).mkdir(exist_ok=True)
    (out / ATLAS_DIR).mkdir(exist_ok=True)
    for name, values in dim_values.items():
        write_f32(out / COLUMNS_DIR / f"{name}.bin", values.astype(np.float32))
    for name, coords in proj_tables.items():
        write_f32(out / POINTS_DIR / f"{name}.bin", coords)
    for page_no, page in enumerate(pages):
        page.save(out / ATLAS_DIR / f"page_{page_no}.png")
    with open(out / METADATA_NAME, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(zip(*(columns[name] for name in header)))
    save_manifest(manifest, out)

    load_manifest(out).validate(out)  # fail loudly if anything written is inconsistent
    return out
