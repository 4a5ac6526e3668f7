import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnsim.sketches import (BloomFilter, Iblt, SketchParameterError,
                               bloom_build)

item_st = st.binary(min_size=32, max_size=32)


# ---------------------------------------------------------------------------
# bloom filter

def test_bloom_sizing_formulas():
    rng = random.Random(1)
    bf = bloom_build([rng.randbytes(32) for _ in range(1000)], 0.001, seed=7)
    assert bf.m == math.ceil(-1000 * math.log(0.001) / math.log(2) ** 2) == 14378
    assert bf.k == 10


def test_bloom_empty_set_degenerate():
    bf = bloom_build([], 0.01, seed=1)
    assert bf.m == 1
    assert random.Random(2).randbytes(32) not in bf


def test_bloom_rejects_bad_fpr():
    for fpr in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(SketchParameterError):
            bloom_build([b"\0" * 32], fpr, seed=1)
    with pytest.raises(SketchParameterError):
        BloomFilter(0, 1, seed=1)


@settings(max_examples=100, deadline=None)
@given(st.lists(item_st, max_size=50), item_st)
def test_bloom_no_false_negatives(items, probe):
    bf = bloom_build(items, 0.01, seed=3)
    for it in items:
        assert it in bf
    bf.add(probe)
    assert probe in bf


def test_bloom_false_positive_rate_near_target():
    rng = random.Random(99)
    members = [rng.randbytes(32) for _ in range(1000)]
    bf = bloom_build(members, 0.01, seed=5)
    member_set = set(members)
    hits = 0
    for _ in range(10000):
        probe = rng.randbytes(32)
        if probe not in member_set and probe in bf:
            hits += 1
    assert 0.002 <= hits / 10000 <= 0.05


def test_bloom_size_model():
    bf = BloomFilter(14378, 10, seed=0)
    assert bf.size_bytes == math.ceil(14378 / 8) + 16


# ---------------------------------------------------------------------------
# iblt basics

def test_iblt_insert_delete_involution():
    t = Iblt(30, seed=4)
    item = random.Random(1).randbytes(32)
    t.insert(item)
    assert not t.is_zero()
    t.delete(item)
    assert t.is_zero()


def test_iblt_delete_then_insert_cancels():
    t = Iblt(30, seed=4)
    item = random.Random(2).randbytes(32)
    t.delete(item)
    t.insert(item)
    assert t.is_zero()


def test_iblt_cell_counts_match_recomputed_indices():
    t = Iblt(30, hash_count=3, seed=8)
    item = random.Random(3).randbytes(32)
    t.insert(item)
    cells = t._cell_indexes(item)
    assert len(cells) == len(set(cells)) == t._degree(item)
    assert sum(t.counts) == len(cells)
    for i in cells:
        assert t.counts[i] == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(item_st, st.sampled_from([1, -1])), max_size=30),
       st.integers(0, 2 ** 32))
def test_iblt_operations_commute(ops, shuffle_seed):
    a = Iblt(20, seed=6)
    b = Iblt(20, seed=6)
    for item, sign in ops:
        (a.insert if sign == 1 else a.delete)(item)
    shuffled = list(ops)
    random.Random(shuffle_seed).shuffle(shuffled)
    for item, sign in shuffled:
        (b.insert if sign == 1 else b.delete)(item)
    assert a.counts == b.counts and a.id_sums == b.id_sums \
        and a.check_sums == b.check_sums


def test_iblt_subtract_param_mismatch():
    with pytest.raises(SketchParameterError):
        Iblt(30, seed=1).subtract(Iblt(31, seed=1))
    with pytest.raises(SketchParameterError):
        Iblt(30, seed=1).subtract(Iblt(30, seed=2))


def test_iblt_bad_params():
    with pytest.raises(SketchParameterError):
        Iblt(0)
    with pytest.raises(SketchParameterError):
        Iblt(10, hash_count=0)


# ---------------------------------------------------------------------------
# subtract + decode

def build_pair(rng, common, a_extra, b_extra, cells, seed):
    pool = set()
    while len(pool) < common + a_extra + b_extra:
        pool.add(rng.randbytes(32))
    pool = list(pool)
    shared = pool[:common]
    only_a = set(pool[common:common + a_extra])
    only_b = set(pool[common + a_extra:])
    ia, ib = Iblt(cells, seed=seed), Iblt(cells, seed=seed)
    for x in shared + sorted(only_a):
        ia.insert(x)
    for x in shared + sorted(only_b):
        ib.insert(x)
    return ia, ib, only_a, only_b


def test_decode_empty_and_singleton():
    assert Iblt(30, seed=1).decode() == (set(), set())
    t = Iblt(30, seed=1)
    item = random.Random(5).randbytes(32)
    t.insert(item)
    assert t.decode() == ({item}, set())


def test_subtract_equal_tables_is_zero():
    rng = random.Random(6)
    ia, ib, _, _ = build_pair(rng, 50, 0, 0, 30, seed=9)
    assert ia.subtract(ib).is_zero()


def test_subtract_decode_matches_set_difference():
    rng = random.Random(7)
    for trial in range(20):
        ia, ib, only_a, only_b = build_pair(rng, 100, 5, 5, 40, seed=trial)
        decoded = ia.subtract(ib).decode()
        assert decoded is not None
        assert decoded == (only_a, only_b)


def test_decode_failure_on_overload():
    rng = random.Random(8)
    failures = 0
    for trial in range(10):
        ia, ib, only_a, only_b = build_pair(rng, 100, 100, 100, 30, seed=trial)
        decoded = ia.subtract(ib).decode()
        if decoded is None:
            failures += 1
        else:
            assert decoded == (only_a, only_b)
    assert failures >= 8  # diff of 200 into 30 cells must essentially always fail


def test_decode_success_monotone_in_cell_count():
    def success_rate(cells, trials=150):
        rng = random.Random(1234)
        ok = 0
        for trial in range(trials):
            ia, ib, only_a, only_b = build_pair(rng, 50, 10, 10, cells, seed=trial)
            if ia.subtract(ib).decode() == (only_a, only_b):
                ok += 1
        return ok / trials

    low, mid, high = success_rate(22), success_rate(30), success_rate(60)
    assert low <= mid + 0.05 and mid <= high + 0.05
    assert high >= 0.99


def test_iblt_size_model():
    assert Iblt(30).size_bytes == 30 * 44 + 16
