"""Signal-processing kernels that run on the masked representation.

Correlation is a transpose-multiply: restrict the array to the selector
column(s), transpose, and multiply back against the full array, counting
co-occurrences. Every comparison is between masktexts, so an untrusted
holder of the masked array can execute it without key material — the kernel
never unmasks anything (its tests pin that with the masking module's
unmask-call counter). Thresholding keeps counts strictly above a cutoff.

Counts are emitted as clear decimal strings (arithmetic over RND masktexts
is impossible by design); pass ``count_key`` to emit AUT-tagged counts
instead so results carry integrity tags end to end.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

from .assoc import AssociativeArray, MaskedArray
from .errors import ConfigError
from .masking import KeyMaterial, MaskMode, mask_aut, unmask_aut


@dataclass
class CorrelationResult:
    """Correlation counts keyed by masked row/col keys.

    ``provenance`` records the selector masktexts the caller asked about;
    every result row key is one of them.
    """

    array: AssociativeArray
    provenance: tuple[str, ...]
    tagged: bool = False

    def __len__(self) -> int:
        return len(self.array)


def _checked_selectors(selector: str | Iterable[str]) -> tuple[str, ...]:
    if isinstance(selector, str):
        return (selector,)
    selectors = tuple(selector)
    if not selectors:
        raise ConfigError("at least one selector column is required")
    return selectors


def correlate(masked: MaskedArray, selector: str | Iterable[str],
              count_key: KeyMaterial | None = None,
              parallel: bool = False) -> CorrelationResult:
    """Co-occurrence counts between the selector column(s) and all columns.

    RND-masked row or column keys cannot be matched (RND is decrypt-only),
    so they are rejected. A selector matching no column yields an empty
    result, not an error.
    """
    if masked.spec.row is MaskMode.RND or masked.spec.col is MaskMode.RND:
        raise ConfigError("correlation needs matchable keys; row/col mode must not be RND")
    selectors = _checked_selectors(selector)
    arr = masked.array

    def one(sel: str) -> AssociativeArray:
        return arr.select_cols([sel]).transpose().multiply(arr)

    if parallel and len(selectors) > 1:
        with ThreadPoolExecutor() as pool:
            parts = list(pool.map(one, selectors))
    else:
        parts = [one(sel) for sel in selectors]

    merged = AssociativeArray()
    for part in parts:
        for t in part.triples():
            merged._set(t.row, t.col, t.val)

    if count_key is not None:
        tagged = AssociativeArray()
        for t in merged.triples():
            tagged._set(t.row, t.col, mask_aut(t.val, count_key).payload)
        return CorrelationResult(tagged, selectors, tagged=True)
    return CorrelationResult(merged, selectors)


def _count_of(value: str, tagged: bool, count_key: KeyMaterial | None) -> int:
    if not tagged:
        return int(value)
    if count_key is not None:
        return int(unmask_aut(value, count_key))
    return int(value.partition(":")[2])


def threshold_masked(result: CorrelationResult, t: int,
                     count_key: KeyMaterial | None = None) -> CorrelationResult:
    """Keep entries whose count is strictly greater than ``t``.

    For AUT-tagged results, passing ``count_key`` verifies each tag before
    trusting the count; without it the clear count after the tag is used.
    """
    if t < 0:
        raise ConfigError("threshold must be >= 0")
    kept = AssociativeArray()
    for tr in result.array.triples():
        if _count_of(tr.val, result.tagged, count_key) > t:
            kept._set(tr.row, tr.col, tr.val)
    return CorrelationResult(kept, result.provenance, tagged=result.tagged)
