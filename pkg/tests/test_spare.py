import random
from collections import Counter

from pocketfilter import SpareStore
from pocketfilter.spare import STASH_CAPACITY


def test_insert_then_query():
    s = SpareStore(capacity=8, key_bits=20, seed=1)
    assert s.query(5) == 0
    assert s.insert(5)
    assert s.query(5) == 1


def test_multiplicities_accumulate():
    s = SpareStore(capacity=8, key_bits=20, seed=1)
    for _ in range(3):
        assert s.insert(9)
    assert s.delete(9)
    assert s.query(9) == 2


def test_capacity_overflow_rejected_without_change():
    s = SpareStore(capacity=1, key_bits=20, seed=1)
    assert s.insert(3)
    assert not s.insert(4)
    assert s.query(3) == 1
    assert s.query(4) == 0
    assert s.live_count == 1


def test_delete_absent_is_not_found():
    s = SpareStore(capacity=4, key_bits=20, seed=2)
    assert not s.delete(11)
    s.insert(11)
    s.delete(11)
    assert s.query(11) == 0
    assert not s.delete(11)


def test_tombstone_reuse_keeps_lookups_correct():
    s = SpareStore(capacity=16, key_bits=20, seed=3)
    keys = list(range(40, 56))
    for k in keys:
        assert s.insert(k)
    for k in keys[:8]:
        assert s.delete(k)
    for k in keys[8:]:
        assert s.query(k) == 1
    for k in keys[:8]:
        assert s.insert(k + 100)
    for k in keys[8:]:
        assert s.query(k) == 1
    s.check_invariants()


def test_random_workload_matches_counter_oracle():
    rng = random.Random(7)
    s = SpareStore(capacity=64, key_bits=16, seed=4)
    oracle = Counter()
    for _ in range(10_000):
        key = rng.randrange(300)
        op = rng.random()
        if op < 0.45 and sum(oracle.values()) < 64:
            assert s.insert(key)
            oracle[key] += 1
        elif op < 0.75:
            present = oracle[key] > 0
            assert s.delete(key) == present
            if present:
                oracle[key] -= 1
        else:
            assert s.query(key) == oracle[key]
    s.check_invariants()
    assert s.live_count == sum(oracle.values())


def test_probe_cap_spills_to_stash_and_stash_exhaustion_overflows():
    s = SpareStore(capacity=4096, key_bits=32, seed=5)
    # hunt for keys that all land on the same home slot
    home = None
    colliders = []
    key = 0
    while len(colliders) < 32 + STASH_CAPACITY + 1:
        h = s._home(key)
        if home is None and h == 0:
            home = h
        if h == 0:
            colliders.append(key)
        key += 1
    for k in colliders[: 32 + STASH_CAPACITY]:
        assert s.insert(k)
    st = s.stats()
    assert st.stash_used == STASH_CAPACITY
    assert not s.insert(colliders[-1])  # stash exhausted
    # everything stored remains reachable, including stash entries
    for k in colliders[: 32 + STASH_CAPACITY]:
        assert s.query(k) == 1
    assert s.delete(colliders[5])
    assert s.query(colliders[5]) == 0
    s.check_invariants()


def test_stats_accessor():
    s = SpareStore(capacity=8, key_bits=20, seed=6)
    s.insert(1)
    s.insert(1)
    s.insert(2)
    st = s.stats()
    assert st.live_count == 3
    assert st.distinct_keys == 2
    assert st.max_multiplicity == 2
    assert st.stash_used == 0


def test_bits_accounting():
    s = SpareStore(capacity=22, key_bits=23, seed=7)
    record = 23 + s.counter_bits
    assert s.bits_used == (44 + STASH_CAPACITY) * record
