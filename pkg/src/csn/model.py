"""Dataset bundle data model: manifest schema, validation, bundle loading.

A bundle is a directory with the layout::

    manifest.json
    points/<projection>.bin    float32 little-endian, row-major, N x dims
    columns/<dimension>.bin    float32 little-endian, N values, NaN = missing
    metadata.csv               RFC-4180, header row, row i+1 = object i
    atlas/page_<k>.png

A loaded bundle is immutable; all reads are safe concurrently.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
POINTS_DIR = "points"
COLUMNS_DIR = "columns"
ATLAS_DIR = "atlas"
METADATA_NAME = "metadata.csv"

FIELD_KINDS = ("info", "categorical", "freetext")


class BundleError(Exception):
    """A bundle or manifest failed to parse or validate."""


@dataclass(frozen=True)
class ProjectionDescriptor:
    name: str
    path: str  # bundle-relative
    dims: int  # 2 or 3


@dataclass(frozen=True)
class DimensionDescriptor:
    name: str
    label: str
    path: str  # bundle-relative
    min: float
    max: float
    bin_count: int
    degenerate: bool = False  # set when every value is missing


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    kind: str  # info | categorical | freetext
    values: tuple[str, ...] | None = None  # categorical only


@dataclass(frozen=True)
class AtlasDescriptor:
    thumb_px: int
    page_px: int
    per_page: int
    page_count: int


@dataclass(frozen=True)
class SubsetInfo:
    seed: int
    parent_count: int


@dataclass
class CollectionManifest:
    """Self-description of a bundle; validated on load."""

    name: str
    object_count: int
    projections: list[ProjectionDescriptor] = field(default_factory=list)
    dimensions: list[DimensionDescriptor] = field(default_factory=list)
    metadata_fields: list[FieldDescriptor] = field(default_factory=list)
    cluster_fields: list[str] = field(default_factory=list)
    atlas: AtlasDescriptor = AtlasDescriptor(64, 1024, 256, 0)
    subset: SubsetInfo | None = None

    def field_names(self) -> list[str]:
        return [f.name for f in self.metadata_fields]

    def projection(self, name: str) -> ProjectionDescriptor:
        for p in self.projections:
            if p.name == name:
                return p
        raise KeyError(name)

    def dimension(self, name: str) -> DimensionDescriptor:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "object_count": self.object_count,
            "projections": [vars(p).copy() for p in self.projections],
            "dimensions": [vars(d).copy() for d in self.dimensions],
            "metadata_fields": [
                {"name": f.name, "kind": f.kind}
                | ({"values": list(f.values)} if f.values is not None else {})
                for f in self.metadata_fields
            ],
            "cluster_fields": list(self.cluster_fields),
            "atlas": vars(self.atlas).copy(),
        }
        if self.subset is not None:
            out["subset"] = vars(self.subset).copy()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "CollectionManifest":
        try:
            return cls(
                name=raw["name"],
                object_count=raw["object_count"],
                projections=[ProjectionDescriptor(**p) for p in raw.get("projections", [])],
                dimensions=[DimensionDescriptor(**d) for d in raw.get("dimensions", [])],
                metadata_fields=[
                    FieldDescriptor(
                        name=f["name"],
                        kind=f["kind"],
                        values=tuple(f["values"]) if "values" in f else None,
                    )
                    for f in raw.get("metadata_fields", [])
                ],
                cluster_fields=list(raw.get("cluster_fields", [])),
                atlas=AtlasDescriptor(**raw["atlas"]),
                subset=SubsetInfo(**raw["subset"]) if raw.get("subset") else None,
            )
        except (KeyError, TypeError) as exc:
            raise BundleError(f"malformed manifest: {exc}") from exc

    def validate(self, root: Path | None = None) -> None:
        """Check every manifest invariant; raise BundleError naming the first violation.

        With ``root`` given, also checks that the referenced binary files hold
        exactly the declared number of values.
        """
        n = self.object_count
        if not isinstance(n, int) or n < 0:
            raise BundleError(f"object_count must be a non-negative integer, got {n!r}")
        seen = set()
        for p in self.projections:
            if p.dims not in (2, 3):
                raise BundleError(f"projection {p.name!r}: dims must be 2 or 3, got {p.dims}")
            if p.name in seen:
                raise BundleError(f"duplicate projection name {p.name!r}")
            seen.add(p.name)
            if root is not None:
                size = _file_size(root / p.path, f"projection {p.name!r}")
                if size != n * p.dims * 4:
                    raise BundleError(
                        f"projection {p.name!r}: coordinate count mismatch "
                        f"(file holds {size // 4} values, expected {n * p.dims})"
                    )
        seen = set()
        for d in self.dimensions:
            if d.name in seen:
                raise BundleError(f"duplicate dimension name {d.name!r}")
            seen.add(d.name)
            if not (d.min <= d.max):
                raise BundleError(f"dimension {d.name!r}: min {d.min} > max {d.max}")
            if d.bin_count < 1:
                raise BundleError(f"dimension {d.name!r}: bin_count must be >= 1")
            if root is not None:
                size = _file_size(root / d.path, f"dimension {d.name!r}")
                if size != n * 4:
                    raise BundleError(
                        f"dimension {d.name!r}: value count mismatch "
                        f"(file holds {size // 4} values, expected {n})"
                    )
        field_kinds = {}
        for f in self.metadata_fields:
            if f.kind not in FIELD_KINDS:
                raise BundleError(f"field {f.name!r}: unknown kind {f.kind!r}")
            if f.name in field_kinds:
                raise BundleError(f"duplicate metadata field {f.name!r}")
            field_kinds[f.name] = f.kind
            if f.kind == "categorical":
                vals = f.values
                if not vals:
                    raise BundleError(f"categorical field {f.name!r}: empty values list")
                if len(set(vals)) != len(vals):
                    raise BundleError(f"categorical field {f.name!r}: values not deduplicated")
                if list(vals) != sorted(vals):
                    raise BundleError(f"categorical field {f.name!r}: values not sorted")
            elif f.values is not None:
                raise BundleError(f"field {f.name!r}: values list only allowed on categorical fields")
        for name in self.cluster_fields:
            if field_kinds.get(name) != "categorical":
                raise BundleError(f"cluster field {name!r} is not a categorical metadata field")
        a = self.atlas
        if a.thumb_px <= 0 or a.page_px <= 0 or a.page_px % a.thumb_px != 0:
            raise BundleError(f"atlas: thumb_px {a.thumb_px} must divide page_px {a.page_px}")
        cols = a.page_px // a.thumb_px
        if a.per_page != cols * cols:
            raise BundleError(f"atlas: per_page must be (page_px/thumb_px)^2 = {cols * cols}, got {a.per_page}")
        expect_pages = math.ceil(n / a.per_page) if n else 0
        if a.page_count != expect_pages:
            raise BundleError(f"atlas: page_count must be ceil(N/per_page) = {expect_pages}, got {a.page_count}")


def _file_size(path: Path, what: str) -> int:
    try:
        return path.stat().st_size
    except OSError as exc:
        raise BundleError(f"{what}: missing file {path}") from exc


def load_manifest(path: str | Path) -> CollectionManifest:
    """Load and validate a manifest from a bundle directory or manifest file."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BundleError(f"cannot read manifest: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"manifest is not valid JSON: {exc}") from exc
    manifest = CollectionManifest.from_dict(raw)
    manifest.validate(root=path.parent)
    return manifest


def save_manifest(manifest: CollectionManifest, root: str | Path) -> Path:
    out = Path(root) / MANIFEST_NAME
    out.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    return out


def read_f32(path: str | Path, count: int | None = None) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if count is not None and data.size != count:
        raise BundleError(f"{path}: expected {count} float32 values, found {data.size}")
    return data


def write_f32(path: str | Path, values: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(values, dtype="<f4").tofile(path)


def normalize_projection(raw_coords: np.ndarray) -> np.ndarray:
    """Fit raw 2D (or 3D) coordinates into [-1, 1]^2, preserving aspect ratio.

    Applies one affine map (uniform scale + translation, same scale for x and
    y) that centers the x/y bounding box at the origin and scales the wider
    axis to exactly [-1, 1]. A third column, when present, is passed through
    untouched (it is a depth value, not a display axis). All points identical
    collapses to the origin. Returns float32.
    """
    coords = np.asarray(raw_coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise ValueError(f"expected N x 2 or N x 3 coordinates, got shape {coords.shape}")
    if coords.shape[0] < 1:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    xy = coords[:, :2]
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    center = (lo + hi) / 2.0
    half = float(np.max((hi - lo) / 2.0))
    if half == 0.0:
        out_xy = np.zeros_like(xy)
    else:
        out_xy = (xy - center) / half
    out = np.empty(coords.shape, dtype=np.float32)
    out[:, :2] = out_xy.astype(np.float32)
    if coords.shape[1] == 3:
        out[:, 2] = coords[:, 2].astype(np.float32)
    return out


def derived_depth(index: int, n: int) -> float:
    """Deterministic per-object depth in [0, 1) used when a projection has no z.

    Bit-reversal permutation of the index over ceil(log2 n) bits, divided by
    2^bits: a low-discrepancy ordering, so objects that are close in index
    rarely share a similar depth.
    """
    if not 0 <= index < n:
        raise ValueError(f"index {index} out of range [0, {n})")
    bits = max(0, (n - 1).bit_length())
    if bits == 0:
        return 0.0
    rev = 0
    v = index
    for _ in range(bits):
        rev = (rev << 1) | (v & 1)
        v >>= 1
    return rev / (1 << bits)


def depth_column(n: int) -> np.ndarray:
    """derived_depth for every index, as float32."""
    return np.array([derived_depth(i, n) for i in range(n)], dtype=np.float32)


@dataclass(frozen=True)
class ObjectRecord:
    index: int
    metadata: dict[str, str]
    dimension_values: dict[str, float]  # NaN = missing


class Bundle:
    """A validated, fully loaded, immutable dataset bundle."""

    def __init__(
        self,
        root: Path,
        manifest: CollectionManifest,
        points: dict[str, np.ndarray],
        columns: dict[str, np.ndarray],
        metadata: dict[str, list[str]],
    ):
        self.root = root
        self.manifest = manifest
        self.points = points  # name -> float32 N x dims
        self.columns = columns  # name -> float32 N
        self.metadata = metadata  # field -> N strings, manifest field order

    @classmethod
    def load(cls, root: str | Path) -> "Bundle":
        root = Path(root)
        manifest = load_manifest(root)
        n = manifest.object_count
        points = {
            p.name: read_f32(root / p.path, n * p.dims).reshape(n, p.dims)
            for p in manifest.projections
        }
        columns = {d.name: read_f32(root / d.path, n) for d in manifest.dimensions}
        metadata = _read_metadata(root / METADATA_NAME, manifest)
        return cls(root, manifest, points, columns, metadata)

    @property
    def object_count(self) -> int:
        return self.manifest.object_count

    def depths(self, projection: str) -> np.ndarray:
        """Draw depth per object: projection z column when present, else derived."""
        coords = self.points[projection]
        if coords.shape[1] == 3:
            return coords[:, 2]
        return depth_column(self.object_count)

    def object_record(self, index: int) -> ObjectRecord:
        n = self.object_count
        if not 0 <= index < n:
            raise IndexError(f"object index {index} out of range [0, {n})")
        return ObjectRecord(
            index=index,
            metadata={name: values[index] for name, values in self.metadata.items()},
            dimension_values={name: float(col[index]) for name, col in self.columns.items()},
        )

    def atlas_page_path(self, page: int) -> Path:
        return self.root / ATLAS_DIR / f"page_{page}.png"


def _read_metadata(path: Path, manifest: CollectionManifest) -> dict[str, list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise BundleError(f"cannot read metadata.csv: {exc}") from exc
    expected = manifest.field_names()
    if header != expected:
        raise BundleError(
            f"metadata.csv columns {header!r} do not match manifest metadata_fields {expected!r}"
        )
    if len(rows) != manifest.object_count:
        raise BundleError(
            f"metadata.csv holds {len(rows)} rows, expected {manifest.object_count}"
        )
    table: dict[str, list[str]] = {name: [] for name in expected}
    for i, row in enumerate(rows):
        if len(row) != len(expected):
            raise BundleError(f"metadata.csv row {i + 1}: {len(row)} cells, expected {len(expected)}")
        for name, cell in zip(expected, row):
            table[name].append(cell)
    return table
