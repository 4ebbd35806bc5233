import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from pocketfilter import PocketDictionary, PocketOverWordError
from pocketfilter.pocket import AccessMeter

from reference import NaiveMultiset, dump_pocket, encode_pocket


def make(b=4, n_prime=6, rb=3, **kw):
    return PocketDictionary(b, n_prime, rb, **kw)


def test_new_pocket_is_empty():
    pd = make()
    assert pd.dump() == "H:0000 B: occ:0"
    for q in range(4):
        for r in range(8):
            assert pd.query(q, r) == 0


def test_over_word_budget_rejected():
    # 64 + 80 + 80*16 = 1424 bits > 4 * 64
    with pytest.raises(PocketOverWordError):
        PocketDictionary(64, 80, 16, word_budget=4)
    PocketDictionary(64, 80, 16, word_budget=23)


def test_insert_encodes_unary_header_and_body():
    pd = make()
    assert pd.insert(2, 5)
    assert pd.dump() == "H:00100 B:101 occ:1"
    assert pd.insert(2, 5)
    assert pd.dump() == "H:001100 B:101101 occ:2"
    assert pd.query(2, 5) == 2


def test_full_pocket_rejects_and_stays_unchanged():
    pd = make()
    for i in range(6):
        assert pd.insert(i % 4, i)
    before = (pd.header, pd.body, pd.occupancy)
    assert not pd.insert(0, 0)
    assert (pd.header, pd.body, pd.occupancy) == before
    assert pd.query(0, 0) == 1  # rejected op is a no-op


def test_delete_one_copy_at_a_time():
    pd = make()
    pd.insert(2, 5)
    pd.insert(2, 5)
    assert pd.delete(2, 5)
    assert pd.query(2, 5) == 1
    assert pd.delete(2, 5)
    assert pd.query(2, 5) == 0


def test_delete_requires_exact_remainder():
    pd = make()
    pd.insert(1, 3)
    assert not pd.delete(1, 4)
    assert pd.query(1, 3) == 1
    assert not pd.delete(0, 0)  # empty group


def test_select_group_formulas():
    pd = make()
    pd.insert(2, 5)
    assert pd.select_group(2) == (0, 1)
    for q in (0, 1, 3):
        assert pd.select_group(q)[1] == 0
    empty = make()
    for q in range(4):
        assert empty.select_group(q) == (0, 0)


def test_select_group_against_naive_decoder_exhaustively():
    # every multiset of cardinality <= 3 over the 32-key universe
    keys = [(q, r) for q in range(4) for r in range(8)]
    for c in range(4):
        for items in itertools.combinations_with_replacement(keys, c):
            pd = make()
            for q, r in items:
                pd.insert(q, r)
            counts = [0] * 4
            for q, _ in items:
                counts[q] += 1
            for q in range(4):
                start, count = pd.select_group(q)
                assert count == counts[q]
                assert start == sum(counts[:q])


def test_canonical_encoding_matches_reference():
    rng = random.Random(5)
    keys = [(q, r) for q in range(4) for r in range(8)]
    for _ in range(300):
        items = sorted(rng.choices(keys, k=rng.randrange(7)))
        pd = make()
        order = items[:]
        rng.shuffle(order)
        for q, r in order:
            assert pd.insert(q, r)
        assert (pd.header, pd.body, pd.occupancy) == encode_pocket(items, 4, 3)
        assert pd.dump() == dump_pocket(items, 4, 3)
        pd.check_invariants()


def test_space_allocation_is_exact():
    for b, np_, rb in [(4, 6, 3), (8, 20, 6), (8, 20, 8), (64, 97, 6)]:
        budget = 4 if (b + np_ + np_ * rb) <= 256 else 16
        pd = PocketDictionary(b, np_, rb, word_budget=budget)
        assert pd.total_bits == (b + np_) + np_ * rb


def test_word_access_meter_stays_within_budget():
    meter = AccessMeter(budget=4)
    pd = make(8, 20, 6, meter=meter)
    rng = random.Random(7)
    held = []
    for _ in range(2000):
        q, r = rng.randrange(8), rng.randrange(64)
        if len(held) >= 18:
            pd.delete(*held.pop(rng.randrange(len(held))))
        if pd.insert(q, r):
            held.append((q, r))
        pd.query(q, r)
    assert meter.ops > 0
    assert meter.max_words <= 4
    assert meter.violations == 0


ops_strategy = st.lists(
    st.tuples(
        st.sampled_from(["insert", "delete", "query"]),
        st.integers(0, 3),
        st.integers(0, 7),
    ),
    max_size=60,
)


@given(ops=ops_strategy)
@settings(max_examples=300, deadline=None)
def test_oracle_equivalence_random_sequences(ops):
    pd = make()
    ref = NaiveMultiset(6)
    for kind, q, r in ops:
        if kind == "insert":
            assert pd.insert(q, r) == ref.insert(q, r)
        elif kind == "delete":
            assert pd.delete(q, r) == ref.delete(q, r)
        else:
            assert pd.query(q, r) == ref.query(q, r)
    assert (pd.header, pd.body, pd.occupancy) == encode_pocket(ref.items, 4, 3)
    pd.check_invariants()


@given(ops=st.lists(
    st.tuples(st.booleans(), st.integers(0, 7), st.integers(0, 63)),
    max_size=50,
))
@settings(max_examples=150, deadline=None)
def test_oracle_equivalence_default_geometry(ops):
    pd = make(8, 20, 6)
    ref = NaiveMultiset(20)
    for is_insert, q, r in ops:
        if is_insert:
            assert pd.insert(q, r) == ref.insert(q, r)
        else:
            assert pd.delete(q, r) == ref.delete(q, r)
        assert pd.occupancy == len(ref.items)
    pd.check_invariants()


def test_range_validation():
    pd = make()
    with pytest.raises(ValueError):
        pd.insert(4, 0)
    with pytest.raises(ValueError):
        pd.insert(0, 8)
    with pytest.raises(ValueError):
        pd.query(-1, 0)
    with pytest.raises(ValueError):
        pd.delete(0, -1)
