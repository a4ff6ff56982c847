"""Space-optimized string dictionaries: a nibble trie in one byte arena,
Bloom filters, and frequency-based sub-dictionary splitting.

Trie layout (all offsets absolute, varints are LEB128, nibbles are the
4-bit halves of the UTF-8 bytes, high nibble first). One node:

    header   u8   bits 0-4 child count k (0..16), bit 5 terminal,
                  bit 6 path-compressed run present
    [run]    varint length L, then ceil(L/2) packed nibbles
    labels   ceil(k/2) packed child nibbles, ascending
    counts   k varints, leaf count of each child subtree
    offsets  k varints, absolute offset of each child node

A node is read as: consume the run nibbles, then (optionally) terminate a
string here, then branch. Nodes are serialized post-order, so every child
offset points backwards; the root sits at the reported root offset. Leaf
enumeration in label order is lexicographic order, and the per-child leaf
counts make rank lookups a single root-to-leaf descent with at most 16
children examined per node.

Arena size is bounded by 6 bytes per node plus half a byte per stored
nibble plus the varint child tables; ``size_bytes`` reports the real
figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import xxhash

from .errors import StoreError

_TERMINAL = 0x20
_HAS_RUN = 0x40
_HEX = "0123456789abcdef"


def _write_varint(buf: bytearray, n: int):
    while n >= 0x80:
        buf.append((n & 0x7F) | 0x80)
        n >>= 7
    buf.append(n)


def _read_varint(buf, pos: int):
    shift = 0
    out = 0
    while True:
        b = buf[pos]
        pos += 1
        out |= (b & 0x7F) << shift
        if b < 0x80:
            return out, pos
        shift += 7


def _pack_nibbles(buf: bytearray, nibbles):
    cur = 0
    for i, nib in enumerate(nibbles):
        if i % 2 == 0:
            cur = nib << 4
        else:
            buf.append(cur | nib)
    if len(nibbles) % 2:
        buf.append(cur)


class TrieDictionary:
    """Bidirectional id<->string lookup over a static sorted string set."""

    LAYOUT_VERSION = 1

    def __init__(self, arena: bytes, value_count: int, root_offset: int):
        self.arena = arena
        self.value_count = value_count
        self.root_offset = root_offset

    @property
    def size_bytes(self) -> int:
        return len(self.arena)

    @classmethod
    def build(cls, sorted_values) -> "TrieDictionary":
        values = list(sorted_values)
        for i in range(1, len(values)):
            if not values[i - 1] < values[i]:
                raise StoreError("trie input must be strictly ascending without duplicates")
        hexes = [v.encode("utf-8").hex() for v in values]
        if not hexes:
            return cls(b"", 0, 0)
        arena = bytearray()
        root, count = cls._build_range(arena, hexes, 0, len(hexes), 0)
        if count != len(values):
            raise StoreError("trie construction lost values")  # pragma: no cover
        return cls(bytes(arena), len(values), root)

    @staticmethod
    def _build_range(arena: bytearray, hexes, lo: int, hi: int, depth: int):
        """Iterative post-order construction; returns (offset, leaf_count)."""
        # frame: [lo, hi, depth_after_run, run, terminal, groups, next, children]
        stack = [TrieDictionary._frame(hexes, lo, hi, depth)]
        done = None
        while stack:
            fr = stack[-1]
            groups = fr[5]
            if fr[6] < len(groups):
                g_lo, g_hi = groups[fr[6]]
                fr[6] += 1
                stack.append(TrieDictionary._frame(hexes, g_lo, g_hi, fr[2] + 1))
                continue
            # all children built: serialize this node
            stack.pop()
            run, terminal, children = fr[3], fr[4], fr[7]
            leaf_count = (1 if terminal else 0) + sum(c[1] for c in children)
            offset = len(arena)
            header = len(children) | (_TERMINAL if terminal else 0) | (_HAS_RUN if run else 0)
            arena.append(header)
            if run:
                _write_varint(arena, len(run))
                _pack_nibbles(arena, run)
            _pack_nibbles(arena, [c[0] for c in children])
            for c in children:
                _write_varint(arena, c[1])
            for c in children:
                _write_varint(arena, c[2])
            done = (offset, leaf_count)
            if stack:
                parent = stack[-1]
                label = _HEX.index(hexes[fr[0]][parent[2]])
                parent[7].append((label, leaf_count, offset))
        return done

    @staticmethod
    def _frame(hexes, lo: int, hi: int, depth: int):
        run = []
        d = depth
        first = hexes[lo]
        while len(first) != d and first[d] == hexes[hi - 1][d]:
            run.append(_HEX.index(first[d]))
            d += 1
        terminal = len(first) == d
        groups = []
        i = lo + (1 if terminal else 0)
        while i < hi:
            lab = hexes[i][d]
            j = i + 1
            while j < hi and hexes[j][d] == lab:
                j += 1
            groups.append((i, j))
            i = j
        return [lo, hi, d, run, terminal, groups, 0, []]

    def _parse_node(self, pos: int):
        """-> (run nibbles, terminal, labels, counts, offsets)."""
        arena = self.arena
        header = arena[pos]
        pos += 1
        k = header & 0x1F
        run = []
        if header & _HAS_RUN:
            length, pos = _read_varint(arena, pos)
            for i in range(length):
                b = arena[pos + i // 2]
                run.append((b >> 4) if i % 2 == 0 else (b & 0xF))
            pos += (length + 1) // 2
        labels = []
        for i in range(k):
            b = arena[pos + i // 2]
            labels.append((b >> 4) if i % 2 == 0 else (b & 0xF))
        pos += (k + 1) // 2
        counts = []
        for _ in range(k):
            c, pos = _read_varint(arena, pos)
            counts.append(c)
        offsets = []
        for _ in range(k):
            o, pos = _read_varint(arena, pos)
            offsets.append(o)
        return run, bool(header & _TERMINAL), labels, counts, offsets

    def id_to_value(self, gid: int) -> str:
        if gid < 0 or gid >= self.value_count:
            raise IndexError(f"trie id {gid} out of range [0, {self.value_count})")
        nibbles = []
        pos = self.root_offset
        remaining = gid
        while True:
            run, terminal, labels, counts, offsets = self._parse_node(pos)
            nibbles.extend(run)
            if terminal:
                if remaining == 0:
                    break
                remaining -= 1
            for lab, cnt, off in zip(labels, counts, offsets):
                if remaining < cnt:
                    nibbles.append(lab)
                    pos = off
                    break
                remaining -= cnt
            else:  # pragma: no cover - leaf counts guarantee descent
                raise StoreError("corrupt trie: rank not covered by children")
        out = bytearray()
        for i in range(0, len(nibbles), 2):
            out.append((nibbles[i] << 4) | nibbles[i + 1])
        return out.decode("utf-8")

    def value_to_id(self, value: str):
        """Rank of ``value``, or None when it is not a member."""
        target = value.encode("utf-8").hex()
        n = len(target)
        pos = self.root_offset
        rank = 0
        at = 0
        while True:
            run, terminal, labels, counts, offsets = self._parse_node(pos)
            for nib in run:
                if at >= n or _HEX.index(target[at]) != nib:
                    return None
                at += 1
            if at == n:
                return rank if terminal else None
            if terminal:
                rank += 1
            want = _HEX.index(target[at])
            descended = False
            for lab, cnt, off in zip(labels, counts, offsets):
                if lab < want:
                    rank += cnt
                elif lab == want:
                    pos = off
                    at += 1
                    descended = True
                    break
                else:
                    break
            if not descended:
                return None

    def serialize(self) -> bytes:
        buf = bytearray([self.LAYOUT_VERSION])
        _write_varint(buf, self.value_count)
        _write_varint(buf, self.root_offset)
        buf.extend(self.arena)
        return bytes(buf)

    @classmethod
    def deserialize(cls, payload: bytes) -> "TrieDictionary":
        if not payload or payload[0] != cls.LAYOUT_VERSION:
            raise StoreError("unsupported trie layout version")
        count, pos = _read_varint(payload, 1)
        root, pos = _read_varint(payload, pos)
        return cls(bytes(payload[pos:]), count, root)


class BloomFilter:
    """Fixed-size Bloom filter over strings; no false negatives by construction."""

    def __init__(self, bits: np.ndarray, n_hashes: int, seed: int = 0):
        self.bits = bits
        self.n_hashes = n_hashes
        self.seed = seed

    @classmethod
    def build(cls, values, target_fpr: float, seed: int = 0) -> "BloomFilter":
        if not 0 < target_fpr < 1:
            raise StoreError("target_fpr must be in (0, 1)")
        values = list(values)
        bits_per_elem = math.ceil(-math.log2(target_fpr) / math.log(2))
        n_bits = max(64, bits_per_elem * max(1, len(values)))
        n_hashes = max(1, round(bits_per_elem * math.log(2)))
        bits = np.zeros((n_bits + 7) // 8, dtype=np.uint8)
        filt = cls(bits, n_hashes, seed)
        filt._n_bits = n_bits
        for v in values:
            for pos in filt._positions(v):
                bits[pos >> 3] |= 1 << (pos & 7)
        return filt

    @property
    def n_bits(self) -> int:
        return getattr(self, "_n_bits", len(self.bits) * 8)

    def _positions(self, value: str):
        data = value.encode("utf-8")
        h1 = xxhash.xxh64_intdigest(data, seed=self.seed)
        h2 = xxhash.xxh64_intdigest(data, seed=self.seed ^ 0x9E3779B97F4A7C15) | 1
        n = self.n_bits
        return [((h1 + i * h2) % (1 << 64)) % n for i in range(self.n_hashes)]

    def maybe_contains(self, value: str) -> bool:
        return all(self.bits[p >> 3] & (1 << (p & 7)) for p in self._positions(value))


@dataclass
class SubDictionary:
    """One piece of a split dictionary: its trie, bloom, and member global-ids."""

    trie: TrieDictionary
    bloom: BloomFilter
    global_ids: np.ndarray  # ascending; local id = rank within this sub-dict


class SubDictionarySet:
    """A string dictionary split into one hot and several cold sub-dictionaries.

    The hot sub-dictionary holds the most frequent values; each cold one
    holds the remaining values first seen in its group of chunks. A value's
    global-id stays its rank in the full dictionary — only the physical
    grouping changes. Bloom filters let absent-value probes skip loading
    any sub-dictionary at all.
    """

    def __init__(self, hot: SubDictionary, cold: list, assignment: dict):
        self.hot = hot
        self.cold = cold
        self.assignment = assignment  # global-id -> (sub index, local id); 0 = hot
        self.loads = 0  # sub-dictionary consultations (bloom checks are free)

    @classmethod
    def plan(
        cls,
        global_dict,
        chunk_dicts,
        frequency,
        groups: int = 16,
        hot_size: int = 1024,
        bloom_fpr: float = 0.01,
    ) -> "SubDictionarySet":
        """Split ``global_dict`` by value frequency and chunk locality.

        ``frequency`` maps every non-null global-id to its row count;
        ``groups`` is the number of chunks per cold sub-dictionary.
        """
        first_gid = 1 if global_dict.has_null else 0
        all_gids = list(range(first_gid, len(global_dict)))
        freq = np.asarray([frequency[g] for g in all_gids], dtype=np.int64)
        order = np.lexsort((np.asarray(all_gids), -freq))
        hot_gids = sorted(all_gids[i] for i in order[:hot_size])
        hot_set = set(hot_gids)

        cold_members: list[list[int]] = []
        assigned = set(hot_set)
        n_chunks = len(chunk_dicts)
        for g0 in range(0, n_chunks, groups):
            members = set()
            for cd in chunk_dicts[g0 : g0 + groups]:
                members.update(int(g) for g in cd.global_ids)
            fresh = sorted(m for m in members - assigned if m >= first_gid)
            assigned.update(fresh)
            if fresh:
                cold_members.append(fresh)
        leftovers = sorted(set(all_gids) - assigned)
        if leftovers:  # values in no chunk (possible after virtual-field tricks)
            cold_members.append(leftovers)

        # per-filter FPR budgeted so the whole probe stays under bloom_fpr
        n_subs = 1 + len(cold_members)
        per_filter = bloom_fpr / (2 * n_subs)

        def make(gids):
            vals = [global_dict.value_at(g) for g in gids]
            return SubDictionary(
                trie=TrieDictionary.build(vals),
                bloom=BloomFilter.build(vals, per_filter),
                global_ids=np.asarray(gids, dtype=np.uint32),
            )

        hot = make(hot_gids)
        cold = [make(m) for m in cold_members]
        assignment = {}
        for local, g in enumerate(hot_gids):
            assignment[g] = (0, local)
        for si, members in enumerate(cold_members, start=1):
            for local, g in enumerate(members):
                assignment[g] = (si, local)
        return cls(hot, cold, assignment)

    def _subdicts(self):
        yield self.hot
        yield from self.cold

    def maybe_contains(self, value: str) -> bool:
        """Membership with bloom pre-filtering; counts real sub-dict loads."""
        return self.lookup(value) is not None

    def lookup(self, value: str):
        """Global-id of ``value`` or None, touching sub-dicts only on bloom hits."""
        for sub in self._subdicts():
            if not sub.bloom.maybe_contains(value):
                continue
            self.loads += 1
            local = sub.trie.value_to_id(value)
            if local is not None:
                return int(sub.global_ids[local])
        return None

    def value_of(self, gid: int) -> str:
        sub_idx, local = self.assignment[gid]
        sub = self.hot if sub_idx == 0 else self.cold[sub_idx - 1]
        return sub.trie.id_to_value(local)

    def reassemble(self) -> list[str]:
        """All values in global-id order; must equal the original dictionary."""
        return [self.value_of(g) for g in sorted(self.assignment)]

    def subdicts_for_chunks(self, chunk_dicts, chunk_indices, groups: int = 16) -> set:
        """Indices of sub-dictionaries needed to decode the given chunks."""
        needed = set()
        for ci in chunk_indices:
            for g in chunk_dicts[ci].global_ids:
                g = int(g)
                if g in self.assignment:
                    needed.add(self.assignment[g][0])
        return needed


class CachedSubDictionaries:
    """Sub-dictionary residency managed by the artifact cache.

    Blooms and member tables stay resident (they are small); trie arenas
    are fetched through the byte cache on demand and re-fetched after
    eviction, so the cache budget genuinely bounds dictionary memory.
    """

    def __init__(self, subdicts: SubDictionarySet, cache, key_base: tuple):
        self.blooms = [s.bloom for s in subdicts._subdicts()]
        self.global_ids = [s.global_ids for s in subdicts._subdicts()]
        self._payloads = [s.trie.serialize() for s in subdicts._subdicts()]
        self.cache = cache
        self.key_base = key_base
        self.loads = 0  # sub-dictionary fetches that reached the loader

    def _trie(self, index: int) -> TrieDictionary:
        def load():
            self.loads += 1
            return self._payloads[index]

        payload = self.cache.get_or_load(self.key_base + ("sub-dictionary", index), load)
        return TrieDictionary.deserialize(payload)

    def lookup(self, value: str):
        """Global-id of ``value`` or None; bloom misses touch no sub-dict."""
        for i, bloom in enumerate(self.blooms):
            if not bloom.maybe_contains(value):
                continue
            local = self._trie(i).value_to_id(value)
            if local is not None:
                return int(self.global_ids[i][local])
        return None
