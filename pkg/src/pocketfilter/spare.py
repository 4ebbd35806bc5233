"""Bounded-capacity exact multiset dictionary backing the bins.

Keys that find their bin full land here.  Open addressing over 2*n_s
slots with a hard probe cap and a small stash keeps every operation a
bounded number of steps; running out of stash or capacity is the
structure's overflow event, surfaced to the caller rather than searched
around.  Deleted slots become tombstones that later inserts reuse, so
probe chains stay valid without compaction.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .hashing import MERSENNE_61

PROBE_CAP = 32
STASH_CAPACITY = 64

_EMPTY = -1
_TOMB = -2


@dataclass(frozen=True)
class SpareStats:
    live_count: int
    distinct_keys: int
    max_multiplicity: int
    stash_used: int


class SpareStore:
    __slots__ = (
        "capacity", "key_bits", "slot_count", "live_count", "distinct_keys",
        "_keys", "_counts", "_stash", "_a", "_b", "_probe_cap",
    )

    def __init__(self, capacity: int, key_bits: int, seed: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.key_bits = key_bits
        self.slot_count = 2 * capacity
        self.live_count = 0
        self.distinct_keys = 0
        self._keys = [_EMPTY] * self.slot_count
        self._counts = [0] * self.slot_count
        self._stash: dict[int, int] = {}
        rng = random.Random(seed)
        self._a = rng.randrange(1, MERSENNE_61)
        self._b = rng.randrange(MERSENNE_61)
        self._probe_cap = min(PROBE_CAP, self.slot_count)

    def _home(self, key: int) -> int:
        return ((self._a * key + self._b) % MERSENNE_61) % self.slot_count

    def insert(self, key: int) -> bool:
        """Add one copy; False (and no change) on overflow."""
        if self.live_count == self.capacity:
            return False
        keys = self._keys
        size = self.slot_count
        pos = self._home(key)
        free = -1
        for _ in range(self._probe_cap):
            k = keys[pos]
            if k == key:
                self._counts[pos] += 1
                self.live_count += 1
                return True
            if k == _EMPTY:
                if free < 0:
                    free = pos
                break
            if k == _TOMB and free < 0:
                free = pos
            pos += 1
            if pos == size:
                pos = 0
        if key in self._stash:
            self._stash[key] += 1
            self.live_count += 1
            return True
        if free >= 0:
            keys[free] = key
            self._counts[free] = 1
        elif len(self._stash) < STASH_CAPACITY:
            self._stash[key] = 1
        else:
            return False
        self.live_count += 1
        self.distinct_keys += 1
        return True

    def delete(self, key: int) -> bool:
        """Remove one copy; False when the key is absent."""
        keys = self._keys
        size = self.slot_count
        pos = self._home(key)
        for _ in range(self._probe_cap):
            k = keys[pos]
            if k == key:
                self._counts[pos] -= 1
                self.live_count -= 1
                if self._counts[pos] == 0:
                    keys[pos] = _TOMB
                    self.distinct_keys -= 1
                return True
            if k == _EMPTY:
                break
            pos += 1
            if pos == size:
                pos = 0
        count = self._stash.get(key)
        if count is None:
            return False
        self.live_count -= 1
        if count == 1:
            del self._stash[key]
            self.distinct_keys -= 1
        else:
            self._stash[key] = count - 1
        return True

    def query(self, key: int) -> int:
        """Exact multiplicity of key."""
        keys = self._keys
        size = self.slot_count
        pos = self._home(key)
        for _ in range(self._probe_cap):
            k = keys[pos]
            if k == key:
                return self._counts[pos]
            if k == _EMPTY:
                break
            pos += 1
            if pos == size:
                pos = 0
        return self._stash.get(key, 0)

    def stats(self) -> SpareStats:
        live_counts = [
            c for k, c in zip(self._keys, self._counts) if k >= 0
        ]
        live_counts.extend(self._stash.values())
        return SpareStats(
            live_count=self.live_count,
            distinct_keys=self.distinct_keys,
            max_multiplicity=max(live_counts, default=0),
            stash_used=len(self._stash),
        )

    @property
    def counter_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.capacity))) if self.capacity > 1 else 1

    @property
    def bits_used(self) -> int:
        """Accounted size of the designed layout: (key, counter) records
        for every table slot and stash entry."""
        record = self.key_bits + self.counter_bits
        return (self.slot_count + STASH_CAPACITY) * record

    def check_invariants(self) -> None:
        total = sum(c for k, c in zip(self._keys, self._counts) if k >= 0)
        total += sum(self._stash.values())
        assert total == self.live_count, "live_count out of sync"
        assert self.live_count <= self.capacity
        for k, c in zip(self._keys, self._counts):
            if k >= 0:
                assert c >= 1, "stored entry with zero multiplicity"
        assert all(c >= 1 for c in self._stash.values())
