import csv
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

STYLES = ["Cubism", "Dada", "Impressionism", "Surrealism"]


def gradient_image(i: int, size=(120, 80)) -> Image.Image:
    """Deterministic synthetic test image; varies with i."""
    w, h = size
    arr = np.zeros((h, w, 3), np.uint8)
    arr[:, :, 0] = np.linspace(0, 255, w, dtype=np.uint8)[None, :]
    arr[:, :, 1] = (i * 37) % 256
    arr[:, :, 2] = np.linspace(255, 0, h, dtype=np.uint8)[:, None]
    return Image.fromarray(arr)


def write_fixture_sources(root: Path, n: int = 100, seed: int = 99) -> dict:
    """Metadata CSV, images, embeddings, and an importable projection."""
    imgs = root / "imgs"
    imgs.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    for i in range(n):
        gradient_image(i).save(imgs / f"im_{i:03d}.png")
        year = str(1850 + int(rng.integers(0, 150))) if i % 11 else "n/a"
        rows.append((f"im_{i:03d}.png", STYLES[i % 4], year, f"Untitled #{i}, oil on canvas"))
    with open(root / "meta.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "style", "year", "title"])
        writer.writerows(rows)
    emb = rng.normal(size=(n, 8)).astype("<f4")
    emb.tofile(root / "emb.bin")
    ext = rng.normal(size=(n, 2))
    np.savetxt(root / "ext.csv", ext, delimiter=",")
    return {"root": root, "n": n, "rows": rows, "embeddings": emb.astype(np.float64)}


def fixture_config(root: Path, **overrides) -> Path:
    config = {
        "name": "demo",
        "metadata_path": "meta.csv",
        "images_path": "imgs",
        "image_column": "filename",
        "embeddings_path": "emb.bin",
        "embeddings_shape": [100, 8],
        "dimension_columns": [
            {"source": "year", "label": "Year"},
            {"source": 0, "label": "Feature 0"},
            {"source": 1, "label": "Feature 1", "bin_count": 12},
        ],
        "field_kinds": {"style": "categorical", "title": "freetext"},
        "projections_requested": [
            {"method": "pca"},
            {"method": "axis", "x": "year", "y": "emb_0"},
            {"method": "import", "path": "ext.csv", "name": "umap"},
        ],
    }
    config.update(overrides)
    path = root / "config.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture(scope="session")
def fixture_sources(tmp_path_factory):
    root = tmp_path_factory.mktemp("sources")
    return write_fixture_sources(root)


@pytest.fixture(scope="session")
def fixture_bundle(fixture_sources, tmp_path_factory):
    """The 100-object end-to-end bundle, built once per session."""
    from csn.ingest import ingest, load_config

    config = load_config(fixture_config(fixture_sources["root"]))
    out = tmp_path_factory.mktemp("bundles") / "demo"
    ingest(config, out)
    return out
