"""Bottom-m distinct-count sketch."""

import numpy as np
import pytest
import xxhash

from skipstore.errors import StoreError
from skipstore.kmv import KMVSketch, value_hash64


def test_hash_test_vectors():
    # canonical byte encodings are kind-tagged; pin a few values
    assert value_hash64("a", seed=1) == xxhash.xxh64_intdigest(b"s:a", seed=1)
    assert value_hash64(42, seed=1) == xxhash.xxh64_intdigest(b"i:42", seed=1)
    assert value_hash64(-1, seed=1) == xxhash.xxh64_intdigest(b"i:-1", seed=1)
    assert value_hash64(2.5, seed=1) == xxhash.xxh64_intdigest(b"f:2.5", seed=1)
    assert value_hash64("a", seed=2) != value_hash64("a", seed=1)
    with pytest.raises(StoreError):
        value_hash64(None)


def test_exact_below_capacity():
    sk = KMVSketch(m=1000)
    for v in ["a", "b", "c", "d", "e", "a", "b"]:
        sk.add(v)
    assert sk.estimate() == 5.0
    assert not sk.saturated


def test_duplicates_never_saturate():
    sk = KMVSketch(m=4)
    for _ in range(100):
        sk.add("same")
    assert sk.estimate() == 1.0
    assert not sk.saturated


def test_estimator_is_m_over_v():
    sk = KMVSketch(m=2)
    sk._hashes = np.asarray(
        [int(0.1 * 2**64), int(0.2 * 2**64)], dtype=np.uint64
    )
    sk._saturated = True
    assert sk.estimate() == pytest.approx(10.0, rel=1e-12)
    assert sk.estimate(unbiased=True) == pytest.approx(5.0, rel=1e-12)


def test_oversized_hash_is_a_noop_when_full():
    sk = KMVSketch(m=2)
    sk.add_hashes([10, 20, 30])
    assert sk.saturated
    before = sk.hashes().tolist()
    sk.add_hashes([2**63])
    assert sk.hashes().tolist() == before


def test_monotone_nondecreasing():
    sk = KMVSketch(m=64)
    last = 0.0
    rng = np.random.default_rng(3)
    for v in rng.integers(0, 10_000, 2000):
        sk.add(int(v))
        est = sk.estimate()
        assert est >= last - 1e-9
        last = est


def test_merge_preserves_exactness_and_matches_union():
    a = KMVSketch(m=1000)
    b = KMVSketch(m=1000)
    for i in range(400):
        a.add(i)
    for i in range(200, 600):
        b.add(i)
    a.merge(b)
    assert a.estimate() == 600.0
    with pytest.raises(StoreError):
        a.merge(KMVSketch(m=999))


def test_merge_equals_single_stream():
    rng = np.random.default_rng(9)
    values = [int(v) for v in rng.integers(0, 5000, 3000)]
    whole = KMVSketch(m=128)
    left, right = KMVSketch(m=128), KMVSketch(m=128)
    for i, v in enumerate(values):
        whole.add(v)
        (left if i % 2 else right).add(v)
    left.merge(right)
    assert left.hashes().tolist() == whole.hashes().tolist()
    assert left.estimate() == whole.estimate()


def test_relative_error_at_scale():
    """Scaled-down accuracy check; the acceptance suite runs the full one."""
    n_distinct = 20_000
    errors = []
    for seed in range(10):
        sk = KMVSketch(m=1024, seed=seed)
        sk.add_hashes([value_hash64(i, seed) for i in range(n_distinct)])
        errors.append(abs(sk.estimate() - n_distinct) / n_distinct)
    errors.sort()
    assert errors[len(errors) // 2] <= 0.05
