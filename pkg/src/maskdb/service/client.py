"""Thin HTTP client for the store service, mirroring the TripleStore surface.

The CLI uses this when pointed at a running service; everything it sends is
already masked, everything it receives still is.
"""

from __future__ import annotations

import httpx

from ..assoc import MaskSpec, Triple
from ..errors import ArgumentError, NotFound, RemapError, StoreError


class StoreClient:
    def __init__(self, base_url: str, name: str, client: httpx.Client | None = None,
                 timeout: float = 60.0):
        self._http = client or httpx.Client(base_url=base_url, timeout=timeout)
        self.name = name

    def _check(self, resp: httpx.Response) -> httpx.Response:
        if resp.status_code == 404:
            raise NotFound(resp.json().get("detail", "not found"))
        if resp.status_code == 409:
            raise RemapError(resp.json().get("detail", "conflict"))
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise StoreError(f"service error {resp.status_code}: {detail}")
        return resp

    @staticmethod
    def _triples(resp: httpx.Response) -> list[Triple]:
        return [Triple(*t) for t in resp.json()["triples"]]

    def create(self, spec: MaskSpec | str) -> None:
        self._check(self._http.post("/stores", json={"name": self.name, "spec": str(spec)}))

    def exists(self) -> bool:
        resp = self._http.get(f"/stores/{self.name}")
        if resp.status_code == 404:
            return False
        self._check(resp)
        return True

    def ensure(self, spec: MaskSpec | str) -> None:
        if not self.exists():
            self.create(spec)
        elif str(self.spec()) != str(spec):
            raise StoreError(f"store {self.name!r} exists with spec {self.spec()}, not {spec}")

    def spec(self) -> MaskSpec:
        resp = self._check(self._http.get(f"/stores/{self.name}"))
        return MaskSpec.parse(resp.json()["spec"])

    def __len__(self) -> int:
        resp = self._check(self._http.get(f"/stores/{self.name}"))
        return int(resp.json()["entries"])

    def ingest(self, triples) -> int:
        payload = {"triples": [list(t) for t in triples]}
        resp = self._check(self._http.post(f"/stores/{self.name}/triples", json=payload))
        return int(resp.json()["inserted"])

    def scan(self, row: str | None = None, col: str | None = None) -> list[Triple]:
        params = {}
        if row is not None:
            params["row"] = row
        if col is not None:
            params["col"] = col
        return self._triples(self._check(
            self._http.get(f"/stores/{self.name}/scan", params=params)))

    def range_scan(self, dimension: str, lo: str, hi: str) -> list[Triple]:
        if lo > hi:
            raise ArgumentError(f"range lower bound {lo!r} above upper bound {hi!r}")
        params = {"dimension": dimension, "lo": lo, "hi": hi}
        return self._triples(self._check(
            self._http.get(f"/stores/{self.name}/range", params=params)))

    def correlate(self, selectors: list[str], threshold: int | None = None) -> list[Triple]:
        payload: dict = {"selectors": selectors}
        if threshold is not None:
            payload["threshold"] = threshold
        return self._triples(self._check(
            self._http.post(f"/stores/{self.name}/correlate", json=payload)))

    def apply_remap(self, dimension: str, mapping: dict[str, str]) -> int:
        payload = {"dimension": dimension, "mapping": mapping}
        resp = self._check(self._http.post(f"/stores/{self.name}/remap", json=payload))
        return int(resp.json()["updated"])

    def persist(self) -> str:
        resp = self._check(self._http.post(f"/stores/{self.name}/persist"))
        return resp.json()["path"]

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "StoreClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
