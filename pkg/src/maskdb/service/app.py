"""FastAPI application exposing the triple store and the masked kernels."""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..assoc import MaskSpec
from ..errors import ArgumentError, ConfigError, FormatError, RemapError, StoreError
from ..kernels import correlate, threshold_masked
from ..store import TripleStore
from .models import (
    CorrelateRequest,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    PersistResponse,
    RemapRequest,
    RemapResponse,
    StoreCreate,
    StoreInfo,
    StoreList,
    TriplesResponse,
)

logger = logging.getLogger(__name__)


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    """Build the service. ``data_dir`` is where store journals live; any
    ``*.tsv`` already there is loaded at startup."""
    app = FastAPI(title="maskdb store service", version=__version__)
    stores: dict[str, TripleStore] = {}
    root = Path(data_dir) if data_dir else None

    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        for path in sorted(root.glob("*.tsv")):
            stores[path.stem] = TripleStore.load(path)
            logger.info("loaded store %r (%d entries)", path.stem, len(stores[path.stem]))

    def get_store(name: str) -> TripleStore:
        store = stores.get(name)
        if store is None:
            raise HTTPException(status_code=404, detail=f"no store named {name!r}")
        return store

    def info(name: str) -> StoreInfo:
        store = stores[name]
        return StoreInfo(name=name, spec=str(store.spec), entries=len(store))

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(version=__version__)

    @app.get("/stores", response_model=StoreList)
    def list_stores():
        return StoreList(stores=[info(name) for name in sorted(stores)])

    @app.post("/stores", response_model=StoreInfo, status_code=201)
    def create_store(req: StoreCreate):
        if req.name in stores:
            raise HTTPException(status_code=409, detail=f"store {req.name!r} already exists")
        try:
            spec = MaskSpec.parse(req.spec)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))
        path = root / f"{req.name}.tsv" if root else None
        stores[req.name] = TripleStore(spec=spec, path=path)
        return info(req.name)

    @app.get("/stores/{name}", response_model=StoreInfo)
    def store_info(name: str):
        get_store(name)
        return info(name)

    @app.delete("/stores/{name}", status_code=204)
    def delete_store(name: str):
        store = get_store(name)
        del stores[name]
        if store.path and store.path.exists():
            store.path.unlink()

    @app.post("/stores/{name}/triples", response_model=IngestResponse)
    def ingest(name: str, req: IngestRequest):
        store = get_store(name)
        try:
            inserted = store.ingest(req.triples)
        except FormatError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return IngestResponse(inserted=inserted, entries=len(store))

    @app.get("/stores/{name}/scan", response_model=TriplesResponse)
    def scan(name: str, row: str | None = None, col: str | None = None):
        store = get_store(name)
        if row is not None and col is not None:
            raise HTTPException(status_code=400, detail="filter by row or col, not both")
        if row is not None:
            triples = store.scan_row(row)
        elif col is not None:
            triples = store.scan_col(col)
        else:
            triples = store.scan()
        return TriplesResponse(triples=triples)

    @app.get("/stores/{name}/range", response_model=TriplesResponse)
    def range_scan(name: str, dimension: str, lo: str, hi: str):
        store = get_store(name)
        try:
            triples = store.range_scan(dimension, lo, hi)
        except ArgumentError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return TriplesResponse(triples=triples)

    @app.post("/stores/{name}/correlate", response_model=TriplesResponse)
    def run_correlate(name: str, req: CorrelateRequest):
        store = get_store(name)
        try:
            result = correlate(store.to_array(), req.selectors)
            if req.threshold is not None:
                result = threshold_masked(result, req.threshold)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return TriplesResponse(triples=list(result.array.triples()))

    @app.post("/stores/{name}/remap", response_model=RemapResponse)
    def remap(name: str, req: RemapRequest):
        store = get_store(name)
        try:
            updated = store.apply_remap(req.dimension, req.mapping)
        except RemapError as e:
            raise HTTPException(status_code=409, detail=str(e))
        return RemapResponse(updated=updated)

    @app.post("/stores/{name}/persist", response_model=PersistResponse)
    def persist(name: str):
        store = get_store(name)
        try:
            path = store.persist()
        except StoreError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return PersistResponse(path=str(path))

    return app
