import random

import pytest

from pocketfilter import (
    AtCapacityError,
    FilterOverflowError,
    NotFoundError,
    OutOfUniverseError,
    RmsDictionary,
    derive_params,
)

PARAMS = derive_params(2**10, 2.0**-4)


def make(params=PARAMS, seed=0):
    return RmsDictionary(params, seed)


def test_insert_then_query():
    d = make()
    assert not d.query(123)
    d.insert(123)
    assert d.query(123)
    assert d.multiplicity(123) == 1


def test_split_join_round_trip():
    d = make()
    rng = random.Random(1)
    for _ in range(500):
        y = rng.randrange(d.universe)
        b, q, r = d.split_key(y)
        assert 0 <= b < d.params.m
        assert 0 <= q < d.params.b_eff
        assert 0 <= r < 2**d.params.remainder_bits
        assert d.join_key(b, q, r) == y


def test_full_bin_spills_to_spare():
    d = make()
    n_prime = d.params.bin_capacity
    keys = [d.join_key(0, i % d.params.b_eff, i % 16) for i in range(n_prime)]
    for y in keys:
        d.insert(y)
    assert d.spare.live_count == 0
    extra = d.join_key(0, 3, 7)
    d.insert(extra)
    assert d.spare.live_count == 1
    assert d.query(extra)
    assert d.spare_peak == 1


def test_historical_spare_resident_outlives_bin_copy():
    # y lands in the spare because its bin is full; a later delete of an
    # equal key removes the bin copy first, leaving the spare copy to
    # answer for the survivors
    d = make()
    n_prime = d.params.bin_capacity
    same = d.join_key(0, 2, 5)
    d.insert(same)
    fillers = [d.join_key(0, i % d.params.b_eff, 15 - (i % 8)) for i in range(n_prime - 1)]
    for y in fillers:
        d.insert(y)
    assert d.bins[0].is_full
    d.insert(same)  # second copy of the same key goes to the spare
    assert d.spare.query(same) == 1
    assert d.multiplicity(same) == 2
    d.delete(same)  # removes the bin copy
    assert d.multiplicity(same) == 1
    assert d.query(same)  # served by the spare resident
    d.delete(same)
    assert not d.query(same)


def test_delete_absent_raises():
    d = make()
    with pytest.raises(NotFoundError):
        d.delete(999)


def test_at_capacity():
    params = derive_params(2**10, 2.0**-1)
    d = make(params)
    rng = random.Random(2)
    while d.live_count < params.n:
        d.insert(rng.randrange(d.universe))
    with pytest.raises(AtCapacityError):
        d.insert(rng.randrange(d.universe))


def test_spare_overflow_surfaces():
    d = make()
    cap = d.params.bin_capacity + d.params.spare_capacity
    with pytest.raises(FilterOverflowError):
        for i in range(cap + 1):
            d.insert(d.join_key(0, i % d.params.b_eff, (i * 3) % 16))


def test_out_of_universe():
    d = make()
    with pytest.raises(OutOfUniverseError):
        d.insert(d.universe)
    with pytest.raises(OutOfUniverseError):
        d.query(-1)


def test_conservation_and_oracle_equivalence_random_ops():
    # roomy spare: the hot keys drive bin 0 through many full/unfull cycles
    params = derive_params(2**10, 2.0**-4, overrides={"spare_capacity": 64})
    d = make(params, seed=3)
    rng = random.Random(3)
    oracle: dict[int, int] = {}
    live: list[int] = []
    hot = [d.join_key(0, q, r) for q in range(4) for r in range(4)]
    hot_set = set(hot)
    hot_live = 0
    hot_cap = params.bin_capacity + params.spare_capacity // 2
    for step in range(20_000):
        op = rng.random()
        if op < 0.5 and len(live) < d.params.n - 1:
            if rng.random() < 0.3 and hot_live < hot_cap:
                y = rng.choice(hot)
                hot_live += 1
            else:
                y = rng.randrange(d.universe)
            d.insert(y)
            oracle[y] = oracle.get(y, 0) + 1
            live.append(y)
        elif op < 0.75 and live:
            y = live.pop(rng.randrange(len(live)))
            d.delete(y)
            if y in hot_set:
                hot_live -= 1
            if oracle[y] == 1:
                del oracle[y]
            else:
                oracle[y] -= 1
        else:
            y = rng.choice(live) if live and rng.random() < 0.5 else rng.randrange(d.universe)
            assert d.multiplicity(y) == oracle.get(y, 0)
        if step % 1000 == 0:
            d.check_invariants()
    d.check_invariants()
    total = sum(p.occupancy for p in d.bins) + d.spare.live_count
    assert total == d.live_count == len(live)


def test_stats_shapes_and_bits():
    d = make()
    st = d.stats()
    assert st.spare_live == 0
    assert st.full_bins == 0
    assert st.bin_load_histogram[0] == d.params.m
    p = d.params
    expected = p.m * (p.b_eff + p.bin_capacity * (1 + p.remainder_bits))
    assert st.bits_used == expected + d.spare.bits_used


def test_mean_bin_load_concentrates():
    params = derive_params(2**14, 2.0**-4)
    d = make(params, seed=9)
    rng = random.Random(9)
    for _ in range(params.n):
        d.insert(rng.randrange(d.universe))
    loads = [p.occupancy for p in d.bins]
    mean = sum(loads) / len(loads)
    expected = params.n / params.m
    # spare-resident keys only ever shrink bin loads
    spill = d.spare.live_count / params.m
    tolerance = 3 * (params.b_eff**0.5) / (params.m**0.5)
    assert abs(mean + spill - expected) <= tolerance + 1e-9
