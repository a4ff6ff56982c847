"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances and runtime budgets are pinned here, not configurable.
"""

import io
import itertools
import random
import string
import time

import numpy as np
import pytest

from helpers import rows_equal, run_differential

from skipstore.bench import BenchConfig, generate_dataset, run_bench
from skipstore.cache import LRUCache, TwoQCache
from skipstore.encoding import encode_column, rle_bit_cost
from skipstore.engine import ExecOptions, execute
from skipstore.errors import PartialResultError
from skipstore.distribute import ShardAssignment, Worker, dispatch, rewrite_for_tree
from skipstore.ingest import build_store, import_csv
from skipstore.kmv import KMVSketch, value_hash64
from skipstore.oracle import OracleTable, oracle_query
from skipstore.parser import parse
from skipstore.partition import PartitionSpec
from skipstore.shardio import _dict_payload, read_shard, write_shard
from skipstore.store import Store
from skipstore.trie import TrieDictionary
from skipstore.values import Kind
from skipstore.encoding import GlobalDictionary


def report(name: str, ok: bool, detail: str):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# 1 ----------------------------------------------------------------------


def test_criterion_1_oracle_equivalence():
    t0 = time.time()
    failures = run_differential(seed=2024, n_cases=170)
    rng = random.Random(4048)
    from helpers import random_query, random_store, random_table

    for _ in range(30):  # include tables near the upper size bound
        schema, columns = random_table(rng, rng.randint(1000, 5000))
        store = random_store(rng, schema, columns)
        table = OracleTable.from_columns(schema, columns)
        sql = random_query(rng)
        result = execute(store, sql, ExecOptions(kmv_m=4096))
        _cols, expected = oracle_query(table, sql)
        if not rows_equal(result.rows, expected):
            failures.append((sql, result.rows[:3], expected[:3]))
    elapsed = time.time() - t0
    report(
        "1 oracle-equivalence",
        not failures and elapsed < 120,
        f"200 random (table, query) pairs, {len(failures)} mismatches, {elapsed:.1f}s",
    )


# 2 ----------------------------------------------------------------------


def test_criterion_2_skipping_soundness_and_effectiveness():
    t0 = time.time()
    cfg = BenchConfig(rows=1_000_000, seed=11)
    schema, columns = generate_dataset(cfg)
    store = build_store(
        schema, columns, PartitionSpec(["country", "table_name"], 50_000)
    )
    shard = store.shards[0]
    n = store.row_count
    sizes = [c.row_count for c in shard.chunks]
    balanced = max(sizes) <= 50_000 and max(sizes) / min(sizes) <= 4
    worst_skip = 1.0
    sound = True
    max_selectivity = 0.0
    for c in range(cfg.countries):
        country = f"c{c:02d}"
        gid = shard.global_dicts["country"].lookup_id(country)
        holders = {
            ci for ci, chunk in enumerate(shard.chunks)
            if chunk.columns["country"].dict.chunk_id_of(gid) is not None
        }
        result = execute(
            store,
            f"SELECT country, COUNT(*) AS c FROM data "
            f"WHERE country IN ('{country}') GROUP BY country",
            ExecOptions(use_result_cache=False),
        )
        stats = result.stats
        touched = stats.chunks_scanned + stats.chunks_cached
        if touched != len(holders):
            sound = False
        selected = result.rows[0][1] if result.rows else 0
        max_selectivity = max(max_selectivity, selected / n)
        worst_skip = min(worst_skip, stats.skipped_fraction)
    elapsed = time.time() - t0
    report(
        "2 skipping",
        sound and balanced and worst_skip >= 0.90 and max_selectivity <= 0.045
        and elapsed < 60,
        f"1M rows into {len(sizes)} chunks (max {max(sizes)}, max/min "
        f"{max(sizes) / min(sizes):.2f}), 25 single-country queries: only holder "
        f"chunks touched={sound}, worst skip fraction={worst_skip:.4f}, "
        f"max selectivity={max_selectivity:.4f}, {elapsed:.1f}s",
    )


# 3 ----------------------------------------------------------------------


def test_criterion_3_element_encoding_formula():
    t0 = time.time()
    widths = {0: 0, 1: None, 2: 1, 3: 2, 4: 4}  # tag -> bytes/row (None=bitset)
    ok = True
    details = []
    for c in (1, 2, 3, 255, 256, 257, 65536, 65537):
        n = c + 13
        values = [i % c for i in range(n)]
        _g, (cc,) = encode_column(values, [(0, n)], Kind.I64)
        per_row = widths[cc.elems.tag]
        expected = (n + 7) // 8 if per_row is None else per_row * n
        got = len(cc.elems.payload)
        if got != expected:
            ok = False
        details.append(f"c={c}:{got}B")
    elapsed = time.time() - t0
    report(
        "3 element-encoding-formula",
        ok and elapsed < 10,
        f"{'; '.join(details)}, {elapsed:.1f}s",
    )


# 4 ----------------------------------------------------------------------


def test_criterion_4_trie():
    t0 = time.time()
    rng = random.Random(99)
    alphabet = string.ascii_lowercase + string.digits + "_-."
    words = set()
    while len(words) < 100_000:
        words.add("".join(rng.choices(alphabet, k=rng.randint(1, 24))))
    ordered = sorted(words, key=lambda s: s.encode())
    trie = TrieDictionary.build(ordered)
    correct = all(
        trie.id_to_value(i) == w and trie.value_to_id(w) == i
        for i, w in enumerate(ordered)
    )

    dates = [f"2011-{1 + d // 28:02d}-{1 + d % 28:02d}" for d in range(100)]
    corpus = sorted(
        f"metrics_daily_{d}_region_{r:02d}_pipeline_{p:02d}"
        for d in dates for r in range(50) for p in range(20)
    )
    assert len(corpus) == 100_000
    prefix_trie = TrieDictionary.build(corpus)
    flat = len(_dict_payload(GlobalDictionary(Kind.STR, corpus, False)))
    ratio = flat / prefix_trie.size_bytes
    elapsed = time.time() - t0
    report(
        "4 trie",
        correct and ratio >= 5.0 and elapsed < 30,
        f"100k bidirectional lookups correct={correct}, "
        f"prefix-corpus: flat {flat}B / trie {prefix_trie.size_bytes}B = {ratio:.1f}x, "
        f"{elapsed:.1f}s",
    )


# 5 ----------------------------------------------------------------------


def test_criterion_5_reordering():
    t0 = time.time()
    fig_ok = rle_bit_cost([[0, 1, 0], [0, 1, 1], [1, 1, 0]], [0, 1, 2]) == 6

    rng = np.random.default_rng(5)
    wins = 0
    for _ in range(1000):
        m = rng.integers(0, 2, (8, 3))
        lex = np.lexsort((m[:, 2], m[:, 1], m[:, 0]))
        if rle_bit_cost(m, lex) <= rle_bit_cost(m, rng.permutation(8)):
            wins += 1

    perms = np.array(list(itertools.permutations(range(8))))
    brute_ok = True
    for _ in range(20):
        m = rng.integers(0, 2, (8, 3))
        ham = (m[:, None, :] != m[None, :, :]).sum(axis=2)
        optimum = int(ham[perms[:, :-1], perms[:, 1:]].sum(axis=1).min()) + 3
        costs = [rle_bit_cost(m, p) for p in perms[:: 4032]]  # sampled orders
        lex = np.lexsort((m[:, 2], m[:, 1], m[:, 0]))
        if rle_bit_cost(m, lex) < optimum or min(costs) < optimum:
            brute_ok = False
    elapsed = time.time() - t0
    report(
        "5 reordering",
        fig_ok and wins >= 900 and brute_ok and elapsed < 60,
        f"figure cost=6 ok={fig_ok}, lex<=random in {wins}/1000 trials, "
        f"8!-oracle consistent={brute_ok}, {elapsed:.1f}s",
    )


# 6 ----------------------------------------------------------------------


def test_criterion_6_kmv_accuracy():
    t0 = time.time()
    n_distinct = 100_000
    m = 1024
    errors = []
    for seed in range(100):
        hashes = np.fromiter(
            (value_hash64(i, seed) for i in range(n_distinct)),
            dtype=np.uint64, count=n_distinct,
        )
        sk = KMVSketch(m=m, seed=seed)
        sk.add_hashes(hashes)
        errors.append(abs(sk.estimate() - n_distinct) / n_distinct)
    errors.sort()
    median = errors[50]
    p95 = errors[94]

    exact = KMVSketch(m=m)
    for v in range(500):
        exact.add(v)
        exact.add(v)
    exact_ok = exact.estimate() == 500.0
    elapsed = time.time() - t0
    report(
        "6 kmv",
        median <= 0.05 and p95 <= 0.10 and exact_ok and elapsed < 60,
        f"m=1024, 100 seeds, 100k distinct: median err={median:.4f}, "
        f"p95={p95:.4f}, exact below capacity={exact_ok}, {elapsed:.1f}s",
    )


# 7 ----------------------------------------------------------------------


def test_criterion_7_distributed_equivalence():
    t0 = time.time()
    rng = random.Random(70)
    from helpers import random_table

    schema, columns = random_table(rng, 900)
    store = build_store(schema, columns, PartitionSpec(["country", "name"], 40),
                        shard_rows=120, seed=3)
    assert len(store.shards) == 8
    workers = {i: Worker(i) for i in range(5)}
    assignment = ShardAssignment.round_robin(8, 5)
    sql = ("SELECT country, SUM(latency) AS s, COUNT(*) AS c, MIN(latency) AS lo, "
           "MAX(latency) AS hi FROM data GROUP BY country ORDER BY s DESC")
    avg_sql = "SELECT country, AVG(score) AS m FROM data GROUP BY country"
    single = execute(store, sql)
    single_avg = execute(store, avg_sql)

    exact_ok = True
    for levels in (2, 3):
        plan = rewrite_for_tree(sql, levels=levels, fanin=3)
        result, _ = dispatch(store, plan, assignment, workers, seed=levels)
        if result.rows != single.rows:
            exact_ok = False
        plan_avg = rewrite_for_tree(avg_sql, levels=levels, fanin=3)
        r_avg, _ = dispatch(store, plan_avg, assignment, workers, seed=levels)
        if not rows_equal(r_avg.rows, single_avg.rows, tol=1e-9):
            exact_ok = False

    workers[1].failed = True  # one replica down, still answered
    plan = rewrite_for_tree(sql)
    tolerant, _ = dispatch(store, plan, assignment, workers, seed=9)
    failure_ok = tolerant.rows == single.rows

    p, r = assignment.placement[4]
    workers[p].failed = True
    workers[r].failed = True
    try:
        dispatch(store, plan, assignment, workers, seed=9)
        double_ok = False
    except PartialResultError as exc:
        double_ok = 4 in exc.shard_ids
    elapsed = time.time() - t0
    report(
        "7 distributed",
        exact_ok and failure_ok and double_ok and elapsed < 60,
        f"tree(2,3 levels)==single exact={exact_ok}, single failure ok={failure_ok}, "
        f"double failure reported={double_ok}, {elapsed:.1f}s",
    )


# 8 ----------------------------------------------------------------------


def test_criterion_8_cache(tmp_path):
    t0 = time.time()

    # scan resistance: after warm-up (admit, flush, ghost re-reference), the
    # 2Q cache must never reload the hot set across scans; plain LRU reloads
    # it after every scan
    def trace_hits(cache):
        loads = {}

        def loader(key, size=100):
            def load():
                loads[key] = loads.get(key, 0) + 1
                return bytes(size)

            return load

        hot = [("hot", i) for i in range(8)]
        trace = hot + [("flush", i) for i in range(12)] + hot
        for round_ in range(4):
            trace += [("scan", round_, i) for i in range(50)]
            trace += hot
        for key in trace:
            cache.get_or_load(key, loader(key))
        hot_loads = max(loads[k] for k in hot)
        return cache.stats.hits_hot + cache.stats.hits_cold, hot_loads

    twoq_hits, twoq_hot_loads = trace_hits(TwoQCache(4000))
    lru_hits, lru_hot_loads = trace_hits(LRUCache(4000))
    scan_ok = twoq_hot_loads <= 2 and lru_hot_loads > 2 and twoq_hits > lru_hits

    # identical results under any budget
    from helpers import desk_table

    schema, columns = desk_table()
    from skipstore.ingest import columns_to_csv

    src = tmp_path / "d1.csv"
    src.write_text(columns_to_csv(schema, columns))
    import_csv(src, tmp_path / "store", partition_fields=["country"], max_chunk_rows=2)
    sql = "SELECT country, SUM(latency) AS s FROM data GROUP BY country ORDER BY s DESC"
    outcomes = []
    for budget in (0, 4, 1 << 62):
        st = Store.open(tmp_path / "store", cache_budget=budget, lazy=True)
        outcomes.append(execute(st, sql).rows)
        st.cache.audit()
    budgets_ok = outcomes[0] == outcomes[1] == outcomes[2]

    # the result cache turns scanned chunks into cached ones on the rerun
    st = Store.open(tmp_path / "store")
    first = execute(st, sql).stats
    second = execute(st, sql).stats
    recache_ok = (
        first.chunks_scanned == 3 and first.chunks_cached == 0
        and second.chunks_cached == 3 and second.chunks_scanned == 0
    )
    elapsed = time.time() - t0
    report(
        "8 cache",
        scan_ok and budgets_ok and recache_ok and elapsed < 60,
        f"2Q scan-resistant vs LRU (hits {twoq_hits} vs {lru_hits}, hot-set loads "
        f"{twoq_hot_loads} vs {lru_hot_loads}), budgets {{0,4,inf}} identical="
        f"{budgets_ok}, rerun cached 3/3={recache_ok}, {elapsed:.1f}s",
    )


# 9 ----------------------------------------------------------------------


def test_criterion_9_format(tmp_path):
    t0 = time.time()
    rng = random.Random(12)
    from helpers import random_table
    from skipstore.ingest import columns_to_csv

    schema, columns = random_table(rng, 400)
    src = tmp_path / "t.csv"
    src.write_text(columns_to_csv(schema, columns))
    overrides = {"ts": "timestamp", "day": "date"}
    import_csv(src, tmp_path / "s1", partition_fields=["country", "name"],
               max_chunk_rows=40, type_overrides=overrides)
    import_csv(src, tmp_path / "s2", partition_fields=["country", "name"],
               max_chunk_rows=40, type_overrides=overrides)
    b1 = (tmp_path / "s1" / "shard_0000.bin").read_bytes()
    b2 = (tmp_path / "s2" / "shard_0000.bin").read_bytes()
    shard, _ = read_shard(io.BytesIO(b1))
    buf = io.BytesIO()
    write_shard(shard, buf)
    roundtrip_ok = b1 == b2 == buf.getvalue()

    corrupted = 0
    for off in range(16, len(b1), max(1, len(b1) // 37)):
        bad = bytearray(b1)
        bad[off] ^= 0x40
        try:
            read_shard(bytes(bad))
        except Exception:
            corrupted += 1
    detection_ok = corrupted == len(range(16, len(b1), max(1, len(b1) // 37)))

    sql = ("SELECT country, COUNT(*) AS c, SUM(latency) AS s FROM data "
           "WHERE name NOT IN ('tbl_01') GROUP BY country ORDER BY c DESC")
    ident = Store.open(tmp_path / "s1", lazy=True, cache_budget=512, codec_id=0)
    deflate = Store.open(tmp_path / "s1", lazy=True, cache_budget=512, codec_id=1)
    codec_ok = execute(ident, sql).rows == execute(deflate, sql).rows
    elapsed = time.time() - t0
    report(
        "9 format",
        roundtrip_ok and detection_ok and codec_ok and elapsed < 60,
        f"byte-exact roundtrip={roundtrip_ok}, all {corrupted} corruptions detected, "
        f"identity==deflate stores={codec_ok}, {elapsed:.1f}s",
    )


# 10 ---------------------------------------------------------------------


def test_criterion_10_bench_ratio_gates():
    t0 = time.time()
    result = run_bench(BenchConfig(rows=1_000_000, seed=7))
    gates = result["gates"]
    shrink = gates["optcols_element_shrink"]
    codec_gain = gates["codec_partition_gain"]
    reorder_gain = gates["reorder_compression_gain"]
    elapsed = time.time() - t0
    report(
        "10 bench-gates",
        shrink >= 50 and codec_gain > 1.0 and reorder_gain >= 1.1 and elapsed < 300,
        f"OptCols element shrink={shrink:.0f}x (>=50), "
        f"compressed partitioned vs not={codec_gain:.1f}x (>1), "
        f"reorder compression gain={reorder_gain:.2f}x (>=1.1), {elapsed:.1f}s",
    )
