"""Dynamic retrieval backend for the sparse case.

Maps each live key to one slot of a fixed (n + t)-entry array of k-bit
satellite values, t = ceil(n / log2 n).  The locator is a bounded-probe
open-addressing table addressed by a keyed permutation of the input:
the permuted value splits into (bucket, key remainder), the remainder
is what gets stored, and displacement offsets keep the quotienting
lossless.  Deleted slots become tombstones that later inserts reuse;
probe chains must never gain holes or entries displaced past them would
be stranded.  A small stash absorbs probe-cap misses; exhausting the
stash is the overflow event.

Per-key counters give duplicate inserts multiset semantics: the slot is
released only when the count returns to zero.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import FilterOverflowError, OutOfUniverseError
from .hashing import MERSENNE_61, FeistelPermutation, KWiseHash, k_independence_for

PROBE_CAP = 32
STASH_CAPACITY = 64

_EMPTY = -1
_TOMB = -2


@dataclass(frozen=True)
class RetrievalStats:
    live_count: int
    distinct_keys: int
    free_slots: int
    stash_used: int
    bits_used: int


class RetrievalStore:
    def __init__(
        self, n: int, value_bits: int, u_hat_bits: int, seed: int
    ):
        self.n = n
        self.value_bits = value_bits
        self.u_hat_bits = u_hat_bits
        self.extra_slots = math.ceil(n / math.log2(n))
        self.slot_total = n + self.extra_slots
        self.table_bits = max(1, math.ceil(math.log2(2 * self.slot_total)))
        self.table_size = 1 << self.table_bits
        self.rem_bits = u_hat_bits - self.table_bits
        if self.rem_bits < 1:
            raise ValueError("universe too small for the locator table")

        rng = random.Random(seed)
        k = k_independence_for(n)
        left_bits = (u_hat_bits + 1) // 2
        self._perm = FeistelPermutation(
            domain_bits=u_hat_bits,
            left_bits=left_bits,
            right_bits=u_hat_bits - left_bits,
            round_fn=KWiseHash(
                prime=MERSENNE_61,
                coefficients=tuple(
                    rng.randrange(MERSENNE_61) for _ in range(k)
                ),
                range_=1 << left_bits,
            ),
        )

        self.slot_array = [0] * self.slot_total
        self._free = list(range(self.slot_total - 1, -1, -1))
        size = self.table_size
        self._rems = [_EMPTY] * size
        self._slots = [0] * size
        self._counts = [0] * size
        self._offsets = [0] * size
        self._stash: dict[int, list[int]] = {}
        self.live_count = 0
        self.distinct_keys = 0

    def _split(self, x: int) -> tuple[int, int]:
        if not 0 <= x < (1 << self.u_hat_bits):
            raise OutOfUniverseError(
                f"key {x} outside universe [0, 2**{self.u_hat_bits})"
            )
        y = self._perm.evaluate(x)
        return y >> self.rem_bits, y & ((1 << self.rem_bits) - 1)

    def _find(self, bucket: int, rem: int) -> int:
        """Table position of (bucket, rem), or -1.  Tombstones keep the
        probe going; only a never-used slot ends the chain early."""
        rems = self._rems
        size = self.table_size
        pos = bucket
        for d in range(PROBE_CAP):
            r = rems[pos]
            if r == _EMPTY:
                return -1
            if r == rem and self._offsets[pos] == d:
                return pos
            pos = (pos + 1) & (size - 1)
        return -1

    def insert(self, x: int, value: int) -> None:
        """Bind x to a slot holding ``value``; duplicate inserts of the
        same key just raise its count."""
        bucket, rem = self._split(x)
        pos = self._find(bucket, rem)
        if pos >= 0:
            self._counts[pos] += 1
            self.live_count += 1
            return
        y = (bucket << self.rem_bits) | rem
        entry = self._stash.get(y)
        if entry is not None:
            entry[1] += 1
            self.live_count += 1
            return
        if not self._free:
            raise FilterOverflowError("no free value slots")
        slot = self._free.pop()
        self.slot_array[slot] = value
        rems = self._rems
        size = self.table_size
        p = bucket
        free = -1
        free_d = 0
        for d in range(PROBE_CAP):
            r = rems[p]
            if r == _EMPTY:
                if free < 0:
                    free, free_d = p, d
                break
            if r == _TOMB and free < 0:
                free, free_d = p, d
            p = (p + 1) & (size - 1)
        if free >= 0:
            rems[free] = rem
            self._slots[free] = slot
            self._counts[free] = 1
            self._offsets[free] = free_d
            self.live_count += 1
            self.distinct_keys += 1
            return
        if len(self._stash) >= STASH_CAPACITY:
            self._free.append(slot)
            raise FilterOverflowError("locator stash is full")
        self._stash[y] = [slot, 1]
        self.live_count += 1
        self.distinct_keys += 1

    def delete(self, x: int) -> bool:
        """Drop one copy of x, freeing its slot when the count hits zero;
        False when x is not stored."""
        bucket, rem = self._split(x)
        pos = self._find(bucket, rem)
        if pos >= 0:
            self._counts[pos] -= 1
            self.live_count -= 1
            if self._counts[pos] == 0:
                self._free.append(self._slots[pos])
                self.distinct_keys -= 1
                self._rems[pos] = _TOMB
            return True
        y = (bucket << self.rem_bits) | rem
        entry = self._stash.get(y)
        if entry is None:
            return False
        entry[1] -= 1
        self.live_count -= 1
        if entry[1] == 0:
            self._free.append(entry[0])
            self.distinct_keys -= 1
            del self._stash[y]
        return True

    def query(self, x: int):
        """Satellite value bound to x, or None when x is not stored."""
        bucket, rem = self._split(x)
        pos = self._find(bucket, rem)
        if pos >= 0:
            return self.slot_array[self._slots[pos]]
        entry = self._stash.get((bucket << self.rem_bits) | rem)
        if entry is not None:
            return self.slot_array[entry[0]]
        return None

    @property
    def bits_used(self) -> int:
        """Accounted layout size: value slots, locator records, stash."""
        slot_bits = math.ceil(math.log2(self.slot_total))
        count_bits = math.ceil(math.log2(self.n))
        offset_bits = math.ceil(math.log2(PROBE_CAP))
        record = self.rem_bits + slot_bits + count_bits + offset_bits
        return (
            self.slot_total * self.value_bits
            + self.table_size * record
            + STASH_CAPACITY * (self.u_hat_bits + slot_bits + count_bits)
            + len(self._perm.round_fn.coefficients) * 61
        )

    def stats(self) -> RetrievalStats:
        return RetrievalStats(
            live_count=self.live_count,
            distinct_keys=self.distinct_keys,
            free_slots=len(self._free),
            stash_used=len(self._stash),
            bits_used=self.bits_used,
        )

    def check_invariants(self) -> None:
        table_total = sum(
            c for r, c in zip(self._rems, self._counts) if r >= 0
        )
        stash_total = sum(e[1] for e in self._stash.values())
        assert table_total + stash_total == self.live_count
        used = self.slot_total - len(self._free)
        assert used == self.distinct_keys, "slot ownership out of sync"
        for r, d in zip(self._rems, self._offsets):
            if r >= 0:
                assert 0 <= d < PROBE_CAP
