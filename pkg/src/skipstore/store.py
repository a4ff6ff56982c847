"""Store: a queryable set of shards plus the caches that serve them.

Element payloads are fetched through the artifact cache; a store opened
lazily keeps only shard skeletons in memory and reads payload bytes from
the shard files on demand, so the cache budget genuinely controls
residency. An in-memory store routes the same way but loads from the
retained byte objects (shared, not copied).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np

from .cache import ChunkResultCache, DeflateCodec, LRUCache, TwoQCache, get_codec
from .encoding import decode_elements
from .errors import StoreError
from .shardio import read_shard
from .values import Field, Kind, Schema

UNLIMITED = 1 << 62


class Store:
    def __init__(self, shards, table: str, cache=None, result_cache=None, manifest=None):
        self.shards = list(shards)
        self.table = table
        self.cache = cache if cache is not None else TwoQCache(UNLIMITED)
        self.result_cache = result_cache if result_cache is not None else ChunkResultCache()
        self.manifest = manifest or {}
        self._sources: dict[int, tuple] = {}  # shard idx -> (path, elems offset index)
        self._vf_lock = threading.Lock()
        for i, sh in enumerate(self.shards):
            sh.shard_id = i

    # -- construction -------------------------------------------------------

    @classmethod
    def from_shards(cls, shards, table=None, cache_budget: int = UNLIMITED,
                    policy: str = "2q", codec=DeflateCodec) -> "Store":
        shards = list(shards)
        if not shards:
            raise StoreError("a store needs at least one shard")
        table = table or shards[0].schema.table
        return cls(shards, table, cache=_make_cache(policy, cache_budget, codec))

    @classmethod
    def open(cls, directory, cache_budget: int = UNLIMITED, lazy: bool = False,
             policy: str = "2q", codec_id: int = 1) -> "Store":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise StoreError(f"no manifest.json in {directory}")
        manifest = json.loads(manifest_path.read_text())
        codec = get_codec(codec_id)
        store = cls(
            [], manifest["table"],
            cache=_make_cache(policy, cache_budget, codec),
            manifest=manifest,
        )
        for i, fname in enumerate(manifest["shards"]):
            path = directory / fname
            with open(path, "rb") as fh:
                shard, index = read_shard(fh, shard_id=i, keep_payload=not lazy)
            store.shards.append(shard)
            store._sources[i] = (path, index)
        if not store.shards:
            raise StoreError("store has no shards")
        return store

    @property
    def schema(self) -> Schema:
        return self.shards[0].schema

    @property
    def row_count(self) -> int:
        return sum(sh.row_count for sh in self.shards)

    # -- artifact access ----------------------------------------------------

    def elements(self, shard_idx: int, field: str, chunk_idx: int) -> np.ndarray:
        """Chunk-id array for one column chunk, via the artifact cache."""
        shard = self.shards[shard_idx]
        if field in shard.virtual_fields:
            return shard.virtual_fields[field].chunks[chunk_idx].elems.ids()
        enc = shard.chunks[chunk_idx].columns[field].elems
        key = (shard.shard_id, field, chunk_idx, "elements")
        payload = self.cache.get_or_load(key, self._loader(shard_idx, field, chunk_idx, enc))
        return decode_elements(enc.tag, enc.row_count, payload)

    def gids(self, shard_idx: int, field: str, chunk_idx: int) -> np.ndarray:
        """Per-row global-ids for one column chunk."""
        cc = self.shards[shard_idx].column_chunk(field, chunk_idx)
        return cc.dict.global_ids[self.elements(shard_idx, field, chunk_idx)]

    def _loader(self, shard_idx: int, field: str, chunk_idx: int, enc):
        if enc.payload is not None:
            payload = enc.payload
            return lambda: payload
        try:
            path, index = self._sources[shard_idx]
            offset, size, _tag = index[(field, chunk_idx)]
        except KeyError:
            raise StoreError(
                f"no payload source for {field!r} chunk {chunk_idx} of shard {shard_idx}"
            ) from None

        def load_from_file():
            with open(path, "rb") as fh:
                fh.seek(offset)
                data = fh.read(size)
            if len(data) != size:
                raise StoreError(f"short read from {path}")
            return data

        return load_from_file

    def vf_lock(self):
        return self._vf_lock


def _make_cache(policy: str, budget: int, codec):
    if policy == "2q":
        return TwoQCache(budget, codec=codec)
    if policy == "lru":
        return LRUCache(budget, codec=codec)
    raise StoreError(f"unknown cache policy {policy!r}")


def schema_from_manifest(manifest: dict) -> Schema:
    fields = [
        Field(f["name"], Kind(f["kind"]), f.get("nullable", True))
        for f in manifest["schema"]
    ]
    return Schema(manifest["table"], fields)
