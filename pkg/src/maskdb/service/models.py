"""Request/response models for the store service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

TripleTuple = tuple[str, str, str]


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class StoreCreate(BaseModel):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$", max_length=128)
    spec: str = "CLR,CLR,CLR"


class StoreInfo(BaseModel):
    name: str
    spec: str
    entries: int


class StoreList(BaseModel):
    stores: list[StoreInfo]


class IngestRequest(BaseModel):
    triples: list[TripleTuple]


class IngestResponse(BaseModel):
    inserted: int
    entries: int


class TriplesResponse(BaseModel):
    triples: list[TripleTuple]


class CorrelateRequest(BaseModel):
    selectors: list[str] = Field(min_length=1)
    threshold: int | None = Field(default=None, ge=0)


class RemapRequest(BaseModel):
    dimension: Literal["row", "col"]
    mapping: dict[str, str]


class RemapResponse(BaseModel):
    updated: int


class PersistResponse(BaseModel):
    path: str
