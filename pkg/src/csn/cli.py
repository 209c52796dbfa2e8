"""Command line entry points: ingest, project, query, export, serve, bench.

Every failure prints one JSON error line to stderr and exits nonzero, so
wrapping tools never have to scrape tracebacks.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from csn import bench as bench_mod
from csn import dimred, exports
from csn.atlas import AtlasImages
from csn.filters import FilterEngine, FilterError, RangeFilter
from csn.ingest import IngestError, ingest, load_config, load_embeddings
from csn.model import (
    Bundle,
    BundleError,
    ProjectionDescriptor,
    load_manifest,
    normalize_projection,
    save_manifest,
    write_f32,
)
from csn.query import MetadataTable, ParseError, QueryFieldError, evaluate, parse_text
from csn.server import serve


def _parse_ranges(text: str | None) -> list[RangeFilter]:
    if not text:
        return []
    try:
        raw = json.loads(text)
        return [RangeFilter(r["dimension"], float(r["lo"]), float(r["hi"])) for r in raw]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed --ranges JSON: {exc}") from exc


def _mask_for(bundle: Bundle, query_text: str | None, ranges: list[RangeFilter]):
    engine = FilterEngine.from_bundle(bundle)
    mask = engine.apply(ranges)
    if query_text and query_text.strip():
        ast = parse_text(query_text)
        mask = mask & evaluate(ast, MetadataTable(bundle.metadata), n=bundle.object_count)
    return mask


def cmd_ingest(args) -> int:
    config = load_config(args.config)
    out = ingest(config, args.out)
    print(json.dumps({"bundle": str(out)}))
    return 0


def cmd_project(args) -> int:
    root = Path(args.bundle)
    bundle = Bundle.load(root)
    n = bundle.object_count

    if args.method in ("pca", "tsne"):
        if args.embeddings:
            shape = None
            if args.embeddings_shape:
                n_s, d_s = args.embeddings_shape.split(",")
                shape = (int(n_s), int(d_s))
            source = load_embeddings(args.embeddings, shape)
        else:
            if not bundle.columns:
                raise BundleError(
                    "bundle has no dimension columns; pass --embeddings for pca/tsne"
                )
            source = np.column_stack(
                [bundle.columns[d.name] for d in bundle.manifest.dimensions]
            ).astype(np.float64)
            if np.isnan(source).any():
                raise BundleError(
                    "dimension columns contain missing values; pass --embeddings instead"
                )
        if source.shape[0] != n:
            raise BundleError(f"embeddings have {source.shape[0]} rows, bundle has {n}")

    name = args.name or args.method
    if args.method == "pca":
        coords = normalize_projection(dimred.pca(source, 2).coords)
    elif args.method == "tsne":
        params = dimred.TsneParams(
            perplexity=args.perplexity, iterations=args.iterations, seed=args.seed
        )
        coords = normalize_projection(dimred.tsne(source, params).coords)
    elif args.method == "axis":
        if not args.x or not args.y:
            raise ValueError("axis projection needs --x and --y dimension names")
        for col in (args.x, args.y):
            if col not in bundle.columns:
                raise BundleError(f"unknown dimension {col!r}")
        coords = dimred.axis_projection(
            bundle.columns[args.x].astype(np.float64),
            bundle.columns[args.y].astype(np.float64),
        ).coords
        name = args.name or f"axis_{args.x}_{args.y}"
    else:
        if not args.path:
            raise ValueError("import projection needs --path")
        coords = dimred.import_projection(args.path, expected_n=n, dims=args.dims)
        name = args.name or Path(args.path).stem

    manifest = load_manifest(root)
    if any(p.name == name for p in manifest.projections):
        raise BundleError(f"projection {name!r} already exists in the bundle")
    rel_path = f"points/{name}.bin"
    write_f32(root / rel_path, coords)
    manifest.projections.append(
        ProjectionDescriptor(name=name, path=rel_path, dims=coords.shape[1])
    )
    manifest.validate(root)
    save_manifest(manifest, root)
    print(json.dumps({"projection": name, "dims": coords.shape[1]}))
    return 0


def cmd_query(args) -> int:
    bundle = Bundle.load(args.bundle)
    mask = _mask_for(bundle, args.q, [])
    for i in mask.indices():
        print(int(i))
    return 0


def cmd_export(args) -> int:
    if not args.csv and not args.png:
        raise ValueError("nothing to export: pass --csv and/or --png")
    bundle = Bundle.load(args.bundle)
    mask = _mask_for(bundle, args.q, _parse_ranges(args.ranges))
    written = {}
    if args.csv:
        body = exports.export_csv(bundle.manifest.field_names(), bundle.metadata, mask)
        Path(args.csv).write_bytes(body)
        written["csv"] = args.csv
    if args.png:
        if not args.view:
            raise ValueError("--png needs --view JSON")
        try:
            view = exports.ViewState.from_dict(json.loads(args.view))
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed --view JSON: {exc}") from exc
        pages = [
            bundle.atlas_page_path(p) for p in range(bundle.manifest.atlas.page_count)
        ]
        atlas = AtlasImages.from_files(pages, bundle.manifest.atlas.thumb_px)
        Path(args.png).write_bytes(exports.render_png(bundle, atlas, mask, view))
        written["png"] = args.png
    print(json.dumps({"pass_count": mask.pass_count, **written}))
    return 0


def cmd_serve(args) -> int:
    serve(args.bundles, port=args.port, host=args.host, ui_dir=args.ui)
    return 0


def cmd_bench(args) -> int:
    results = bench_mod.run_benchmark(n=args.n, dims=args.dims, repeats=args.repeats)
    if args.json:
        print(json.dumps([vars(r) for r in results], indent=2))
    else:
        print(bench_mod.format_report(results, args.n, args.dims))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csn", description="Ingest, project, filter, export, and serve image collection bundles."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a bundle from a JSON config")
    p.add_argument("--config", required=True, help="ingest config JSON")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("project", help="add a projection to an existing bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--method", required=True, choices=["pca", "tsne", "axis", "import"])
    p.add_argument("--name", help="projection name (defaults per method)")
    p.add_argument("--embeddings", help="embedding matrix for pca/tsne (CSV or raw float32)")
    p.add_argument("--embeddings-shape", help="N,D for raw float32 embeddings")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x", help="axis method: x dimension name")
    p.add_argument("--y", help="axis method: y dimension name")
    p.add_argument("--path", help="import method: coordinate file")
    p.add_argument("--dims", type=int, help="import method: columns in a raw float32 file")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("query", help="print indices matching a query")
    p.add_argument("--bundle", required=True)
    p.add_argument("--q", required=True, help="query text")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export", help="export filtered metadata CSV and/or view PNG")
    p.add_argument("--bundle", required=True)
    p.add_argument("--q", help="query text")
    p.add_argument("--ranges", help='JSON list of {"dimension","lo","hi"}')
    p.add_argument("--csv", help="output CSV path")
    p.add_argument("--png", help="output PNG path")
    p.add_argument("--view", help="view JSON for --png")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve bundles over HTTP")
    p.add_argument("--bundles", required=True, help="bundle directory, or a directory of bundles")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="static ui directory to mount at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="filter-latency benchmark comparing kernel backends")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--dims", type=int, default=8)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        IngestError,
        BundleError,
        FilterError,
        ParseError,
        QueryFieldError,
        exports.ExportError,
        ValueError,
        OSError,
    ) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
