"""Import-time composite range partitioning and row reordering.

Rows are first sorted lexicographically by the chosen field order, then the
whole table is split heaviest-first: the largest pending chunk is cut at
the value boundary of the first still-splittable field closest to its row
midpoint, until every chunk fits the row threshold (or cannot be split
because every partition field has a single distinct value in it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, StoreError
from .values import Kind, NUMERIC_KINDS, sort_key


@dataclass
class PartitionSpec:
    fields: list[str] = field(default_factory=list)
    max_chunk_rows: int = 50_000

    def __post_init__(self):
        if self.max_chunk_rows < 1:
            raise StoreError("max_chunk_rows must be >= 1")


def _rank_codes(values, kind: Kind) -> np.ndarray:
    """Dense order-preserving codes for one column (NULL lowest)."""
    n = len(values)
    if kind in NUMERIC_KINDS:
        dtype = np.float64 if kind is Kind.F64 else np.int64
        arr = np.asarray([0 if v is None else v for v in values], dtype=dtype)
        mask = np.asarray([v is None for v in values], dtype=bool)
        uniq = np.unique(arr[~mask]) if (~mask).any() else np.asarray([], dtype=dtype)
        codes = np.searchsorted(uniq, arr).astype(np.int64) + 1
        codes[mask] = 0
        return codes
    distinct = sorted({v for v in values if v is not None}, key=sort_key)
    index = {v: i + 1 for i, v in enumerate(distinct)}
    return np.fromiter(
        (0 if v is None else index[v] for v in values), dtype=np.int64, count=n
    )


def _spec_codes(columns: dict, spec: PartitionSpec, kinds: dict) -> list[np.ndarray]:
    for f in spec.fields:
        if f not in columns:
            raise SchemaError(f"partition field {f!r} not in table")
    return [_rank_codes(columns[f], kinds[f]) for f in spec.fields]


def reorder_rows(columns: dict, spec: PartitionSpec, kinds: dict) -> np.ndarray:
    """Stable lexicographic permutation over the partition fields.

    ``columns`` maps field name -> value sequence; returns row indices in
    their new order. Reordering never changes query results, so this is a
    pure compression/locality play.
    """
    n = len(next(iter(columns.values()))) if columns else 0
    codes = _spec_codes(columns, spec, kinds)
    if not codes or n == 0:
        return np.arange(n, dtype=np.int64)
    # np.lexsort sorts by the last key first; earlier fields dominate
    return np.lexsort(tuple(reversed(codes))).astype(np.int64)


def partition(sorted_columns: dict, spec: PartitionSpec, kinds: dict) -> list[tuple[int, int]]:
    """Chunk boundaries over rows already ordered by :func:`reorder_rows`.

    Returns contiguous (start, end) ranges covering all rows. A chunk whose
    partition fields are all constant stays oversized rather than splitting
    mid-value.
    """
    if not sorted_columns:
        return []
    n = len(next(iter(sorted_columns.values())))
    if n == 0:
        return []
    codes = _spec_codes(sorted_columns, spec, kinds)
    final: list[tuple[int, int]] = []
    pending: list[tuple[int, int]] = [(0, n)]
    while pending:
        # heaviest first; ties go to the lowest start index
        pending.sort(key=lambda r: (-(r[1] - r[0]), r[0]))
        start, end = pending.pop(0)
        if end - start <= spec.max_chunk_rows:
            final.append((start, end))
            continue
        cut = _best_cut(codes, start, end)
        if cut is None:
            final.append((start, end))  # unsplittable: single value everywhere
            continue
        pending.append((start, cut))
        pending.append((cut, end))
    final.sort()
    return final


def _best_cut(codes, start: int, end: int):
    """Value boundary of the first splittable field nearest the midpoint."""
    for col in codes:
        seg = col[start:end]
        changes = np.flatnonzero(seg[1:] != seg[:-1])
        if len(changes) == 0:
            continue
        cuts = changes + start + 1
        mid = start + (end - start) / 2
        dist = np.abs(cuts - mid)
        best = dist.min()
        # ties resolved toward the later boundary
        return int(cuts[np.flatnonzero(dist == best)[-1]])
    return None


def partition_unordered(columns: dict, spec: PartitionSpec, kinds: dict):
    """Assign rows to the same value-range chunks without reordering them.

    Rows keep their original relative order inside each chunk; chunks are
    laid out in range order. Returns (permutation, boundaries). This is the
    baseline the row-reordering step is measured against.
    """
    perm = reorder_rows(columns, spec, kinds)
    sorted_cols = {f: [columns[f][i] for i in perm] for f in spec.fields}
    bounds = partition(sorted_cols, spec, kinds)
    n = len(perm)
    chunk_of = np.empty(n, dtype=np.int64)
    for ci, (s, e) in enumerate(bounds):
        chunk_of[perm[s:e]] = ci
    order = np.argsort(chunk_of, kind="stable").astype(np.int64)
    sizes = [e - s for s, e in bounds]
    starts = np.concatenate(([0], np.cumsum(sizes)))
    new_bounds = [(int(starts[i]), int(starts[i + 1])) for i in range(len(sizes))]
    return order, new_bounds


def range_meta(sorted_columns: dict, spec: PartitionSpec, bounds) -> list[dict]:
    """Per-chunk (min, max) of each partition field — diagnostics only."""
    metas = []
    for s, e in bounds:
        meta = {}
        for f in spec.fields:
            vals = sorted_columns[f][s:e]
            non_null = [v for v in vals if v is not None]
            if non_null:
                meta[f] = (min(non_null, key=sort_key), max(non_null, key=sort_key))
            else:
                meta[f] = (None, None)
        metas.append(meta)
    return metas
