"""Two-layer in-memory residency for column artifacts.

Artifacts (element payloads, sub-dictionary arenas, ...) live either Hot
(raw bytes) or Cold (block-compressed) under a single byte budget. The
replacement policy is 2Q: fresh admissions enter a FIFO (A1in) whose
evictions leave key-only ghosts (A1out); only a re-reference of a ghost
proves a key hot and admits it to the main LRU (Am), so one-time scans
can never displace the working set. A plain LRU with the same interface
ships as the comparison policy, and a separate result cache keeps
per-chunk accumulators for fully active chunks.
"""

from __future__ import annotations

import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass

from .errors import StoreError


class IdentityCodec:
    codec_id = 0
    name = "identity"

    @staticmethod
    def compress(data: bytes) -> bytes:
        return data

    @staticmethod
    def decompress(data: bytes) -> bytes:
        return data


class DeflateCodec:
    """Fast LZ-class block codec (zlib at a speed-over-ratio level)."""

    codec_id = 1
    name = "deflate"

    @staticmethod
    def compress(data: bytes) -> bytes:
        return zlib.compress(data, 1)

    @staticmethod
    def decompress(data: bytes) -> bytes:
        return zlib.decompress(data)


CODECS = {0: IdentityCodec, 1: DeflateCodec}


def register_codec(codec) -> None:
    """Benchmark harness hook for extra codecs; id 0 stays identity."""
    if codec.codec_id == 0 and codec is not IdentityCodec:
        raise StoreError("codec id 0 is reserved for identity")
    CODECS[codec.codec_id] = codec


def get_codec(codec_id: int):
    try:
        return CODECS[codec_id]
    except KeyError:
        raise StoreError(f"unknown codec id {codec_id}") from None


_HOT = "hot"
_COLD = "cold"


@dataclass
class _Entry:
    key: tuple
    payload: bytes
    layer: str  # hot | cold
    raw_size: int


@dataclass
class CacheStats:
    hits_hot: int = 0
    hits_cold: int = 0
    misses: int = 0
    loads: int = 0
    ghost_promotions: int = 0
    evictions: int = 0
    demotions: int = 0
    oversize_rejects: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class TwoQCache:
    """Scan-resistant byte cache; all operations linearizable under one lock."""

    policy_name = "2q"

    def __init__(self, budget_bytes: int, kin: float = 0.25, ghost_factor: float = 0.5,
                 codec=DeflateCodec):
        self.budget = budget_bytes
        self.kin = kin
        self.ghost_factor = ghost_factor
        self.codec = codec
        self.a1in: OrderedDict[tuple, _Entry] = OrderedDict()
        self.a1out: OrderedDict[tuple, None] = OrderedDict()
        self.am: OrderedDict[tuple, _Entry] = OrderedDict()
        self._a1in_bytes = 0
        self._am_hot_bytes = 0
        self._am_cold_bytes = 0
        self.stats = CacheStats()
        self._lock = threading.RLock()
        self._inflight: dict[tuple, threading.Event] = {}

    # -- accounting ---------------------------------------------------------

    @property
    def total_bytes(self) -> int:
        return self._a1in_bytes + self._am_hot_bytes + self._am_cold_bytes

    @property
    def hot_bytes(self) -> int:
        return self._a1in_bytes + self._am_hot_bytes

    @property
    def cold_bytes(self) -> int:
        return self._am_cold_bytes

    def resident_keys(self) -> set:
        with self._lock:
            return set(self.a1in) | set(self.am)

    def occupancy(self) -> dict:
        with self._lock:
            return {
                "policy": self.policy_name,
                "budget_bytes": self.budget,
                "hot_bytes": self.hot_bytes,
                "cold_bytes": self.cold_bytes,
                "entries": len(self.a1in) + len(self.am),
                "ghosts": len(self.a1out),
            }

    def audit(self) -> None:
        """Accounting and budget-safety check; raises on violation."""
        with self._lock:
            a1in = sum(len(e.payload) for e in self.a1in.values())
            am_hot = sum(len(e.payload) for e in self.am.values() if e.layer == _HOT)
            am_cold = sum(len(e.payload) for e in self.am.values() if e.layer == _COLD)
            if (a1in, am_hot, am_cold) != (
                self._a1in_bytes,
                self._am_hot_bytes,
                self._am_cold_bytes,
            ):
                raise StoreError("cache byte accounting out of sync")
            if self.budget > 0 and self.total_bytes > self.budget:
                raise StoreError(f"cache over budget: {self.total_bytes} > {self.budget}")
            if set(self.a1in) & set(self.am):
                raise StoreError("key resident in both queues")

    # -- core ---------------------------------------------------------------

    def get_or_load(self, key: tuple, loader) -> bytes:
        """Serve ``key`` from cache, loading (coalesced across threads) on a miss."""
        if self.budget <= 0:
            with self._lock:
                self.stats.misses += 1
                self.stats.loads += 1
            return loader()
        while True:
            with self._lock:
                entry = self.a1in.get(key) or self.am.get(key)
                if entry is not None:
                    return self._serve(entry)
                wait_for = self._inflight.get(key)
                if wait_for is None:
                    self._inflight[key] = threading.Event()
                    break
            wait_for.wait()
        try:
            data = loader()
        except BaseException:
            with self._lock:
                self._inflight.pop(key).set()
            raise
        with self._lock:
            self.stats.misses += 1
            self.stats.loads += 1
            self._admit(key, data)
            self._inflight.pop(key).set()
        return data

    def _serve(self, entry: _Entry) -> bytes:
        if entry.key in self.am:
            self.am.move_to_end(entry.key)
        if entry.layer == _HOT:
            self.stats.hits_hot += 1
            return entry.payload
        # cold hit: decompress and re-hot (entry is in Am; A1in never demotes)
        self.stats.hits_cold += 1
        data = self.codec.decompress(entry.payload)
        self._am_cold_bytes -= len(entry.payload)
        entry.payload = data
        entry.layer = _HOT
        self._am_hot_bytes += len(data)
        self._evict_to_fit(exempt=entry.key)
        return data

    def _admit(self, key: tuple, data: bytes) -> None:
        if len(data) > self.budget:
            self.stats.oversize_rejects += 1
            return
        if key in self.a1out:
            # proven hot: a ghost re-reference goes straight to the main LRU
            del self.a1out[key]
            self.stats.ghost_promotions += 1
            self.am[key] = _Entry(key, data, _HOT, len(data))
            self._am_hot_bytes += len(data)
        else:
            self.a1in[key] = _Entry(key, data, _HOT, len(data))
            self._a1in_bytes += len(data)
        self._evict_to_fit(exempt=key)

    def _ghost_cap(self) -> int:
        # the classic Kout is in pages; approximate pages by the average
        # resident entry size so the ghost list covers ~half the budget
        entries = len(self.a1in) + len(self.am)
        if entries and self.total_bytes:
            avg = max(1, self.total_bytes // entries)
            return max(8, int(self.ghost_factor * self.budget / avg))
        return max(8, int(self.ghost_factor * entries))

    def _push_ghost(self, key: tuple) -> None:
        self.a1out[key] = None
        self.a1out.move_to_end(key)
        cap = self._ghost_cap()
        while len(self.a1out) > cap:
            self.a1out.popitem(last=False)

    def _pop_a1in(self) -> None:
        k, e = self.a1in.popitem(last=False)
        self._a1in_bytes -= len(e.payload)
        self._push_ghost(k)
        self.stats.evictions += 1

    def _evict_to_fit(self, exempt=None) -> None:
        budget = self.budget
        # A1in evicts first: over its capacity share, then over total budget
        while self._a1in_bytes > self.kin * budget and len(self.a1in) > 1:
            self._pop_a1in()
        while self.total_bytes > budget and self.a1in:
            if len(self.a1in) == 1 and next(iter(self.a1in)) == exempt and self.am:
                break  # prefer squeezing Am over dropping the entry being served
            self._pop_a1in()
        # then demote main-LRU hot tail to the compressed layer
        if self.total_bytes > budget:
            for k in list(self.am):
                if self.total_bytes <= budget:
                    break
                e = self.am[k]
                if e.layer == _HOT and k != exempt:
                    compressed = self.codec.compress(e.payload)
                    self._am_hot_bytes -= len(e.payload)
                    self._am_cold_bytes += len(compressed)
                    e.payload = compressed
                    e.layer = _COLD
                    self.stats.demotions += 1
        # cold entries go last
        while self.total_bytes > budget and self.am:
            k, e = self.am.popitem(last=False)
            if e.layer == _HOT:
                self._am_hot_bytes -= len(e.payload)
            else:
                self._am_cold_bytes -= len(e.payload)
            self.stats.evictions += 1
        # a lone oversized resident can remain; drop it if still over
        while self.total_bytes > budget and self.a1in:
            self._pop_a1in()

    def evict_to_fit(self, budget: int) -> None:
        with self._lock:
            self.budget = budget
            self._evict_to_fit()


class LRUCache:
    """Plain LRU with the TwoQCache interface; the comparison policy."""

    policy_name = "lru"

    def __init__(self, budget_bytes: int, codec=DeflateCodec):
        self.budget = budget_bytes
        self.codec = codec
        self.entries: OrderedDict[tuple, bytes] = OrderedDict()
        self._bytes = 0
        self.stats = CacheStats()
        self._lock = threading.RLock()

    @property
    def total_bytes(self) -> int:
        return self._bytes

    def resident_keys(self) -> set:
        with self._lock:
            return set(self.entries)

    def occupancy(self) -> dict:
        return {
            "policy": self.policy_name,
            "budget_bytes": self.budget,
            "hot_bytes": self._bytes,
            "cold_bytes": 0,
            "entries": len(self.entries),
            "ghosts": 0,
        }

    def audit(self) -> None:
        if self.budget > 0 and self._bytes > self.budget:
            raise StoreError("cache over budget")

    def get_or_load(self, key: tuple, loader) -> bytes:
        with self._lock:
            if key in self.entries:
                self.stats.hits_hot += 1
                self.entries.move_to_end(key)
                return self.entries[key]
        data = loader()
        with self._lock:
            self.stats.misses += 1
            self.stats.loads += 1
            if self.budget <= 0 or len(data) > self.budget:
                self.stats.oversize_rejects += 1
                return data
            self.entries[key] = data
            self._bytes += len(data)
            while self._bytes > self.budget:
                _, dropped = self.entries.popitem(last=False)
                self._bytes -= len(dropped)
                self.stats.evictions += 1
        return data


@dataclass
class ResultCacheStats:
    hits: int = 0
    misses: int = 0
    stores: int = 0


class ChunkResultCache:
    """Per-chunk accumulators for fully active chunks.

    Keyed by (shard, chunk, fragment) where the fragment names the group
    expression and aggregate list; the restriction matters only through
    the fully-active classification, so any drill-down that fully covers
    the chunk reuses the entry.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._entries: dict = {}
        self.stats = ResultCacheStats()
        self._lock = threading.RLock()

    def lookup(self, shard_id: int, chunk_id: int, fragment_key: str):
        if not self.enabled:
            return None
        with self._lock:
            hit = self._entries.get((shard_id, chunk_id, fragment_key))
            if hit is None:
                self.stats.misses += 1
            else:
                self.stats.hits += 1
            return hit

    def store(self, shard_id: int, chunk_id: int, fragment_key: str, accumulators) -> None:
        if not self.enabled:
            return
        with self._lock:
            self._entries.setdefault((shard_id, chunk_id, fragment_key), accumulators)
            self.stats.stores += 1

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)
