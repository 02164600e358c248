"""Embedded sorted triple store.

Holds masked triples in two coupled indexes — (row, col) → val and its
transpose (col, row) → val — so row scans, column scans and lexicographic
range scans are all served from sorted keys without touching plaintext.
Deterministic key masking makes equality scans server-executable and
order-preserving encodings make range scans server-executable; the store
itself is key-blind either way.

Persistence is a sorted TSV journal in the triple file format, prefixed with
the header line ``#cmdstore v1 <row-mode>,<col-mode>,<val-mode>`` recording
the mask spec; the file is human-inspectable and diff-able.

The public surface (ingest / scans / range / remap / persist) doubles as the
adapter contract a networked NoSQL backend could implement instead.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Literal

from .assoc import AssociativeArray, MaskSpec, MaskedArray, Triple
from .errors import ArgumentError, FormatError, LoadError, RemapError, StoreError

logger = logging.getLogger(__name__)

HEADER_MAGIC = "#cmdstore"
HEADER_VERSION = "v1"

Dimension = Literal["row", "col"]


def _check_dimension(dimension: str) -> None:
    if dimension not in ("row", "col"):
        raise ArgumentError(f"dimension must be 'row' or 'col', got {dimension!r}")


class TripleStore:
    """Sorted (row, col) → val map plus its transpose, kept in lockstep."""

    def __init__(self, spec: MaskSpec | None = None, path: str | Path | None = None):
        self.spec = spec or MaskSpec()
        self.path = Path(path) if path else None
        self._main: dict[str, dict[str, str]] = {}
        self._trans: dict[str, dict[str, str]] = {}
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def rows(self) -> list[str]:
        return sorted(self._main)

    def cols(self) -> list[str]:
        return sorted(self._trans)

    # -- writes ------------------------------------------------------------

    def ingest(self, data: MaskedArray | AssociativeArray | Iterable[tuple[str, str, str]]) -> int:
        """Insert triples into both indexes; returns how many were new or
        changed. Re-ingesting identical triples is a no-op."""
        if isinstance(data, MaskedArray):
            if data.spec != self.spec:
                raise StoreError(f"array spec {data.spec} does not match store spec {self.spec}")
            triples = data.array.triples()
        elif isinstance(data, AssociativeArray):
            triples = data.triples()
        else:
            triples = data
        inserted = 0
        for row, col, val in triples:
            for f, what in ((row, "row"), (col, "col"), (val, "val")):
                if not f:
                    raise FormatError(f"{what} must be non-empty")
                if "\t" in f or "\n" in f or "\r" in f:
                    raise FormatError(f"{what} contains a tab or line break: {f!r}")
            cols = self._main.setdefault(row, {})
            if col not in cols:
                self._count += 1
                inserted += 1
            elif cols[col] != val:
                inserted += 1
            cols[col] = val
            self._trans.setdefault(col, {})[row] = val
        return inserted

    def apply_remap(self, dimension: Dimension, remap: dict[str, str]) -> int:
        """Rewrite every key of one dimension through ``remap`` atomically.

        The remap must cover every stored key in that dimension; otherwise
        RemapError is raised and the store is untouched.
        """
        _check_dimension(dimension)
        index = self._main if dimension == "row" else self._trans
        missing = [k for k in index if k not in remap]
        if missing:
            raise RemapError(f"remap is missing {len(missing)} stored {dimension} key(s), "
                             f"e.g. {missing[0]!r}; no changes applied")
        new_main: dict[str, dict[str, str]] = {}
        changed = 0
        for row, cols in self._main.items():
            for col, val in cols.items():
                nrow = remap.get(row, row) if dimension == "row" else row
                ncol = remap.get(col, col) if dimension == "col" else col
                if (nrow, ncol) != (row, col):
                    changed += 1
                new_main.setdefault(nrow, {})[ncol] = val
        new_trans: dict[str, dict[str, str]] = {}
        count = 0
        for row, cols in new_main.items():
            for col, val in cols.items():
                new_trans.setdefault(col, {})[row] = val
                count += 1
        if count != self._count:
            raise RemapError("remap collided two keys; no changes applied")
        self._main, self._trans = new_main, new_trans
        return changed

    # -- reads -------------------------------------------------------------

    def scan(self) -> list[Triple]:
        """Every triple, sorted by (row, col)."""
        out = []
        for row in sorted(self._main):
            cols = self._main[row]
            for col in sorted(cols):
                out.append(Triple(row, col, cols[col]))
        return out

    def scan_row(self, row: str) -> list[Triple]:
        cols = self._main.get(row, {})
        return [Triple(row, c, cols[c]) for c in sorted(cols)]

    def scan_col(self, col: str) -> list[Triple]:
        rows = self._trans.get(col, {})
        return [Triple(r, col, rows[r]) for r in sorted(rows)]

    def range_scan(self, dimension: Dimension, lo: str, hi: str) -> list[Triple]:
        """Triples whose key in ``dimension`` lies in [lo, hi] lexicographically.

        Meaningful against OPE-masked (or clear) keys, where byte order
        carries plaintext order.
        """
        _check_dimension(dimension)
        if lo > hi:
            raise ArgumentError(f"range lower bound {lo!r} above upper bound {hi!r}")
        out = []
        if dimension == "row":
            for row in sorted(self._main):
                if lo <= row <= hi:
                    cols = self._main[row]
                    out.extend(Triple(row, c, cols[c]) for c in sorted(cols))
        else:
            for col in sorted(self._trans):
                if lo <= col <= hi:
                    rows = self._trans[col]
                    out.extend(Triple(r, col, rows[r]) for r in sorted(rows))
        return out

    def to_array(self) -> MaskedArray:
        """Snapshot of the whole store as a masked associative array."""
        arr = AssociativeArray({r: dict(c) for r, c in self._main.items()})
        return MaskedArray(arr, self.spec)

    # -- persistence ---------------------------------------------------------

    def persist(self, path: str | Path | None = None) -> Path:
        """Write the journal: header line, then triples sorted by (row, col)."""
        target = Path(path) if path else self.path
        if target is None:
            raise StoreError("no persistence path configured")
        lines = [f"{HEADER_MAGIC} {HEADER_VERSION} {self.spec}"]
        lines.extend(f"{t.row}\t{t.col}\t{t.val}" for t in self.scan())
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        except OSError as e:
            raise StoreError(f"cannot write store to {target}: {e}") from e
        self.path = target
        return target

    @classmethod
    def load(cls, path: str | Path) -> "TripleStore":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise StoreError(f"cannot read store from {path}: {e}") from e
        store = cls(path=path)
        lines = text.split("\n")
        start = 0
        if lines and lines[0].startswith(HEADER_MAGIC):
            parts = lines[0].split(" ")
            if len(parts) != 3 or parts[1] != HEADER_VERSION:
                raise LoadError(f"line 1: bad store header {lines[0]!r}", line=1)
            try:
                store.spec = MaskSpec.parse(parts[2])
            except Exception as e:
                raise LoadError(f"line 1: bad mask spec in header: {e}", line=1)
            start = 1
        for i in range(start, len(lines)):
            line = lines[i]
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise LoadError(f"line {i + 1}: expected 3 tab-separated fields, "
                                f"got {len(fields)}", line=i + 1)
            if not all(fields):
                raise LoadError(f"line {i + 1}: empty field", line=i + 1)
            store.ingest([tuple(fields)])
        return store
