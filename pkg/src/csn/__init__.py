"""csn: ingest, project, filter, query, export, and serve image collection bundles."""

__version__ = "0.1.0"
