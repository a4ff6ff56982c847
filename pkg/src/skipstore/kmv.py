"""Bottom-m sketch for approximate count distinct.

Keeps the m smallest distinct 64-bit hashes of the values seen. While
fewer than m distinct hashes have ever been observed the sketch is exact;
once it saturates, the estimate is m / v with v the largest retained hash
normalized to [0, 1]. Sketches merge by hash-set union and re-truncation,
which preserves exactness as long as neither side ever saturated.

The hash is xxh64 over kind-tagged canonical value bytes with a
configurable seed; test vectors live in the test suite.
"""

from __future__ import annotations

import numpy as np
import xxhash

from .errors import StoreError

_SCALE = float(2**64)


def value_hash64(value, seed: int = 1) -> int:
    """Canonical 64-bit hash of a column value. NULLs are never hashed."""
    if value is None:
        raise StoreError("NULL values do not participate in count distinct")
    if isinstance(value, str):
        data = b"s:" + value.encode("utf-8")
    elif isinstance(value, float):
        data = b"f:" + repr(value).encode("ascii")
    else:
        data = b"i:%d" % value
    return xxhash.xxh64_intdigest(data, seed=seed)


class KMVSketch:
    """The m smallest distinct normalized hashes of a stream of values."""

    __slots__ = ("m", "seed", "_hashes", "_buf", "_saturated")

    def __init__(self, m: int = 1024, seed: int = 1):
        if m < 1:
            raise StoreError("sketch capacity must be >= 1")
        self.m = m
        self.seed = seed
        self._hashes = np.empty(0, dtype=np.uint64)
        self._buf: list[int] = []
        self._saturated = False

    def add(self, value) -> None:
        if value is None:
            return
        self._buf.append(value_hash64(value, self.seed))
        if len(self._buf) > self.m:
            self._compact()

    def add_hashes(self, hashes) -> None:
        """Bulk insertion of precomputed 64-bit hashes."""
        arr = np.asarray(hashes, dtype=np.uint64)
        if len(arr):
            self._buf.extend(int(h) for h in arr)
            self._compact()

    def _compact(self) -> None:
        if not self._buf:
            return
        merged = np.union1d(self._hashes, np.asarray(self._buf, dtype=np.uint64))
        self._buf = []
        if len(merged) > self.m:
            # only grows saturated: dropping the tail means we lost exactness
            self._saturated = True
            merged = merged[: self.m]
        self._hashes = merged

    @property
    def saturated(self) -> bool:
        self._compact()
        return self._saturated

    def hashes(self) -> np.ndarray:
        self._compact()
        return self._hashes

    def merge(self, other: "KMVSketch") -> None:
        if other.m != self.m or other.seed != self.seed:
            raise StoreError("cannot merge sketches with different capacity or seed")
        other._compact()
        self._saturated = self._saturated or other._saturated
        self._buf.extend(int(h) for h in other._hashes)
        self._compact()

    def estimate(self, unbiased: bool = False) -> float:
        """Distinct-count estimate: exact below capacity, else m / v.

        ``unbiased=True`` switches to the (m - 1) / v variant from the
        sketch literature; the default matches the plain estimator.
        """
        self._compact()
        if not self._saturated:
            return float(len(self._hashes))
        v = float(self._hashes[-1]) / _SCALE
        k = self.m - 1 if unbiased else self.m
        return k / v
