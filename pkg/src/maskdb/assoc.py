"""Sparse associative arrays in the exploded field|value schema.

Dense records are exploded so every field/value pair becomes a column key
``field|value`` with value "1", moving all semantics into row and column
keys. Arrays are sparse maps row → column → value; absence means zero and
no operation ever stores an explicit zero. All operations return new arrays;
instances are treated as immutable after construction.

Per-dimension masking wraps each row key, column key and value under its own
mode from a :class:`MaskSpec`, producing a :class:`MaskedArray` with the
identical nonzero pattern (keys renamed, values replaced by masktexts).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple

from .errors import ConfigError, CryptoError, FormatError, MaskdbError, SchemaError
from .masking import KeyMaterial, MaskMode, mask, unmask

logger = logging.getLogger(__name__)

FIELD_SEP = "|"
PRESENCE = "1"


class Triple(NamedTuple):
    row: str
    col: str
    val: str


def _check_field(value: str, what: str) -> str:
    if not value:
        raise FormatError(f"{what} must be non-empty")
    if "\t" in value or "\n" in value or "\r" in value:
        raise FormatError(f"{what} contains a tab or line break: {value!r}")
    return value


class AssociativeArray:
    """Sparse row → column → value map with sorted iteration order."""

    __slots__ = ("_entries", "_count", "duplicate_count", "count_passthroughs")

    def __init__(self, entries: Mapping[str, Mapping[str, str]] | None = None):
        self._entries: dict[str, dict[str, str]] = {}
        self._count = 0
        self.duplicate_count = 0
        self.count_passthroughs = 0
        if entries:
            for r, cols in entries.items():
                for c, v in cols.items():
                    self._set(r, c, v)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> "AssociativeArray":
        """Build from (row, col, val) tuples; duplicate (row, col) keeps the
        last value and is counted in ``duplicate_count``."""
        arr = cls()
        for row, col, val in triples:
            arr._set(row, col, val)
        if arr.duplicate_count:
            logger.warning("dropped %d duplicate (row, col) entries (last write wins)",
                           arr.duplicate_count)
        return arr

    def _set(self, row: str, col: str, val: str) -> None:
        for field, what in ((row, "row"), (col, "col"), (val, "val")):
            if not field:
                raise FormatError(f"{what} must be non-empty")
        cols = self._entries.setdefault(row, {})
        if col in cols:
            self.duplicate_count += 1
        else:
            self._count += 1
        cols[col] = val

    def __len__(self) -> int:
        return self._count

    def __bool__(self) -> bool:
        return self._count > 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, AssociativeArray):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        return f"AssociativeArray({self._count} entries, {len(self._entries)} rows)"

    def rows(self) -> list[str]:
        return sorted(self._entries)

    def cols(self) -> list[str]:
        seen: set[str] = set()
        for cols in self._entries.values():
            seen.update(cols)
        return sorted(seen)

    def row(self, r: str) -> dict[str, str]:
        return dict(self._entries.get(r, ()))

    def get(self, row: str, col: str, default: str | None = None) -> str | None:
        return self._entries.get(row, {}).get(col, default)

    def triples(self) -> Iterator[Triple]:
        """All entries, sorted by (row, col)."""
        for r in sorted(self._entries):
            cols = self._entries[r]
            for c in sorted(cols):
                yield Triple(r, c, cols[c])

    def transpose(self) -> "AssociativeArray":
        out = AssociativeArray()
        for r, cols in self._entries.items():
            for c, v in cols.items():
                out._set(c, r, v)
        return out

    def multiply(self, other: "AssociativeArray") -> "AssociativeArray":
        """Structural product: C(r,c) = |{k : self(r,k) and other(k,c)}|.

        Presence drives the count, not stored values (values may be opaque
        masktexts); results are decimal strings, and zero counts are simply
        absent.
        """
        acc: dict[str, dict[str, int]] = {}
        for r, cols in self._entries.items():
            for k in cols:
                inner = other._entries.get(k)
                if not inner:
                    continue
                row_acc = acc.setdefault(r, {})
                for c in inner:
                    row_acc[c] = row_acc.get(c, 0) + 1
        out = AssociativeArray()
        for r, row_acc in acc.items():
            for c, n in row_acc.items():
                out._set(r, c, str(n))
        return out

    def select_cols(self, cols: Iterable[str]) -> "AssociativeArray":
        wanted = set(cols)
        out = AssociativeArray()
        for r, row_cols in self._entries.items():
            for c, v in row_cols.items():
                if c in wanted:
                    out._set(r, c, v)
        return out

    def threshold(self, t: int | str) -> "AssociativeArray":
        """Keep entries with value strictly greater than ``t``.

        An integer ``t`` compares values as decimal counts; a string ``t``
        compares lexicographically (for ordertext-valued arrays).
        """
        out = AssociativeArray()
        for r, cols in self._entries.items():
            for c, v in cols.items():
                if isinstance(t, str):
                    keep = v > t
                else:
                    try:
                        keep = int(v) > t
                    except ValueError:
                        raise ValueError(
                            f"value {v!r} at ({r!r}, {c!r}) is not a decimal integer") from None
                if keep:
                    out._set(r, c, v)
        return out


def explode(records: Iterable[Mapping[str, object]] | Iterable[tuple[str, str, str]],
            row_key: str) -> AssociativeArray:
    """Explode dense records (or sparse (id, field, value) tuples) into an
    associative array: field f with value v becomes column "f|v" valued "1"."""
    triples: list[tuple[str, str, str]] = []
    count = 0
    for record in records:
        count += 1
        if isinstance(record, Mapping):
            if row_key not in record:
                raise SchemaError(f"record {count} is missing the row key field {row_key!r}")
            row = str(record[row_key])
            for field, value in record.items():
                if field == row_key or value is None:
                    continue
                triples.append((row, f"{field}{FIELD_SEP}{value}", PRESENCE))
        else:
            rid, field, value = record
            triples.append((str(rid), f"{field}{FIELD_SEP}{value}", PRESENCE))
    if count == 0:
        raise SchemaError("no records to explode")
    return AssociativeArray.from_triples(triples)


@dataclass(frozen=True)
class MaskSpec:
    """Which masking mode each dimension uses."""

    row: MaskMode = MaskMode.CLR
    col: MaskMode = MaskMode.CLR
    val: MaskMode = MaskMode.CLR

    @classmethod
    def parse(cls, text: str) -> "MaskSpec":
        parts = [p for p in text.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"spec must be three comma-separated modes, got {text!r}")
        return cls(*(MaskMode.parse(p) for p in parts))

    def __str__(self) -> str:
        return f"{self.row.value},{self.col.value},{self.val.value}"

    def ope_dimensions(self) -> list[str]:
        return [dim for dim in ("row", "col", "val")
                if getattr(self, dim) is MaskMode.OPE]


CLEAR_SPEC = MaskSpec()


@dataclass
class MaskedArray:
    """An associative array over masktexts plus the spec that produced it."""

    array: AssociativeArray
    spec: MaskSpec

    def __len__(self) -> int:
        return len(self.array)


def _sessions_for(spec: MaskSpec, sessions: Mapping[str, object] | None) -> dict[str, object]:
    out: dict[str, object] = {}
    for dim in spec.ope_dimensions():
        if not sessions or dim not in sessions:
            raise ConfigError(f"{dim} mode is OPE but no OPE session is bound for it")
        out[dim] = sessions[dim]
    return out


def _mask_keys(keys: Iterable[str], mode: MaskMode, key: KeyMaterial,
               session, dim: str) -> dict[str, str]:
    """Mask each distinct key exactly once (RND must not split a key)."""
    out: dict[str, str] = {}
    for k in keys:
        try:
            out[k] = mask(k, mode, key, ope_session=session).payload
        except MaskdbError as e:
            raise type(e)(f"{dim} key {k!r}: {e}") from e
    if mode is MaskMode.OPE:
        # a rebalance during later inserts may have remapped earlier
        # ordertexts; re-read every key for its current encoding
        out = {k: session.lookup(k) for k in out}
    return out


def mask_array(array: AssociativeArray, spec: MaskSpec, key: KeyMaterial,
               sessions: Mapping[str, object] | None = None,
               allow_rnd_keys: bool = False) -> MaskedArray:
    """Mask every dimension of ``array`` under ``spec``.

    RND on row or column keys makes the array unqueryable (RND supports
    decryption only), so it is rejected unless ``allow_rnd_keys`` is set.
    """
    if not allow_rnd_keys and (spec.row is MaskMode.RND or spec.col is MaskMode.RND):
        raise ConfigError("RND on row/col keys leaves the array decrypt-only; "
                          "pass allow_rnd_keys=True to mask anyway")
    bound = _sessions_for(spec, sessions)
    row_map = _mask_keys(array.rows(), spec.row, key, bound.get("row"), "row")
    col_map = _mask_keys(array.cols(), spec.col, key, bound.get("col"), "col")

    val_session = bound.get("val")
    if spec.val is MaskMode.OPE:
        distinct = {t.val for t in array.triples()}
        val_map = _mask_keys(sorted(distinct), MaskMode.OPE, key, val_session, "val")

    out = AssociativeArray()
    for t in array.triples():
        if spec.val is MaskMode.OPE:
            masked_val = val_map[t.val]
        else:
            try:
                masked_val = mask(t.val, spec.val, key).payload
            except MaskdbError as e:
                raise type(e)(f"val at ({t.row!r}, {t.col!r}): {e}") from e
        out._set(row_map[t.row], col_map[t.col], masked_val)
    if len(out) != len(array):
        raise CryptoError("masking collided two keys; masked array lost entries")
    return MaskedArray(out, spec)


def _looks_like_count(value: str) -> bool:
    return value.isdigit()


class _TripleUnmasker:
    """Streaming inverse of per-dimension masking, caching repeated keys.

    Computed correlation counts are plain decimal strings whatever the
    declared value mode; they are passed through unchanged (tallied in
    ``passthroughs``) instead of being "unmasked".
    """

    def __init__(self, spec: MaskSpec, key: KeyMaterial,
                 sessions: Mapping[str, object] | None = None):
        self.spec = spec
        self.key = key
        self.sessions = _sessions_for(spec, sessions)
        self.passthroughs = 0
        self._row_cache: dict[str, str] = {}
        self._col_cache: dict[str, str] = {}

    def _key(self, payload: str, mode: MaskMode, dim: str, cache: dict[str, str]) -> str:
        hit = cache.get(payload)
        if hit is not None:
            return hit
        try:
            clear = unmask(payload, mode, self.key, ope_session=self.sessions.get(dim))
        except MaskdbError as e:
            raise type(e)(f"{dim} key {payload!r}: {e}") from e
        cache[payload] = clear
        return clear

    def unmask_triple(self, t: tuple[str, str, str]) -> Triple:
        row, col, val = t
        spec = self.spec
        crow = self._key(row, spec.row, "row", self._row_cache)
        ccol = self._key(col, spec.col, "col", self._col_cache)
        if spec.val is not MaskMode.CLR:
            val_session = self.sessions.get("val")
            is_ordertext = (spec.val is MaskMode.OPE and set(val) <= {"0", "1"}
                            and val_session is not None)
            if _looks_like_count(val) and not is_ordertext:
                self.passthroughs += 1
            else:
                try:
                    val = unmask(val, spec.val, self.key, ope_session=val_session)
                except MaskdbError as e:
                    raise type(e)(f"val at ({row!r}, {col!r}): {e}") from e
        return Triple(crow, ccol, val)


def unmask_triples(triples: Iterable[tuple[str, str, str]], spec: MaskSpec,
                   key: KeyMaterial,
                   sessions: Mapping[str, object] | None = None) -> list[Triple]:
    """Unmask a triple stream under ``spec`` (see :class:`_TripleUnmasker`)."""
    worker = _TripleUnmasker(spec, key, sessions)
    out = [worker.unmask_triple(t) for t in triples]
    if worker.passthroughs:
        logger.warning("left %d numeric count values untouched despite value mode %s",
                       worker.passthroughs, spec.val.value)
    return out


def unmask_array(masked: MaskedArray, spec: MaskSpec | None, key: KeyMaterial,
                 sessions: Mapping[str, object] | None = None) -> AssociativeArray:
    """Invert :func:`mask_array`."""
    spec = spec or masked.spec
    worker = _TripleUnmasker(spec, key, sessions)
    out = AssociativeArray()
    for t in masked.array.triples():
        out._set(*worker.unmask_triple(t))
    if worker.passthroughs:
        out.count_passthroughs = worker.passthroughs
        logger.warning("left %d numeric count values untouched despite value mode %s",
                       worker.passthroughs, spec.val.value)
    return out


def read_triples(path: str | Path) -> list[Triple]:
    """Read the UTF-8 TSV triple format: row<TAB>col<TAB>val, LF endings."""
    text = Path(path).read_text(encoding="utf-8")
    triples = []
    for i, line in enumerate(text.split("\n"), start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"line {i}: expected 3 tab-separated fields, got {len(fields)}")
        if any("\r" in f for f in fields):
            raise FormatError(f"line {i}: carriage return in field")
        triples.append(Triple(*fields))
    return triples


def write_triples(path: str | Path, triples: Iterable[tuple[str, str, str]]) -> int:
    lines = []
    for row, col, val in triples:
        for f, what in ((row, "row"), (col, "col"), (val, "val")):
            _check_field(f, what)
        lines.append(f"{row}\t{col}\t{val}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)
