"""Two-level dictionary over reduced keys: pocket bins plus a spare.

A key y in [m * b_eff * 2**rb] decomposes bijectively into (bin,
quotient, remainder) by its own bits: the remainder is the low bits,
the quotient the next field, the bin index the rest.  Because the
decomposition is a bijection, equal triples mean equal keys, and the
structure realizes exact multiset semantics: the copies of y are the
matching (q, r) entries in y's bin plus y's multiplicity in the spare.

Inserts go to the bin first and spill to the spare only when the bin is
full; deletes mirror that order, so a key can sit in the spare while
the bin has room (a copy left over from when the bin was full) without
affecting answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AtCapacityError, FilterOverflowError, NotFoundError, OutOfUniverseError
from .params import FilterParams
from .pocket import AccessMeter, PocketDictionary
from .spare import SpareStore


@dataclass(frozen=True)
class RmsStats:
    live_count: int
    spare_live: int
    spare_peak: int
    full_bins: int
    bin_load_histogram: tuple[int, ...]
    bits_used: int


class RmsDictionary:
    def __init__(
        self, params: FilterParams, seed: int, meter: AccessMeter | None = None
    ):
        self.params = params
        self.universe = params.reduced_universe
        self.live_count = 0
        self.spare_peak = 0
        self.meter = meter
        self._rb = params.remainder_bits
        self._rmask = (1 << params.remainder_bits) - 1
        self._b_eff = params.b_eff
        self._capacity = params.n
        self.bins = [
            PocketDictionary(
                params.b_eff,
                params.bin_capacity,
                params.remainder_bits,
                word_budget=params.word_budget,
                meter=meter,
            )
            for _ in range(params.m)
        ]
        self.spare = SpareStore(
            capacity=params.spare_capacity,
            key_bits=max(1, math.ceil(math.log2(self.universe))),
            seed=seed,
        )

    def split_key(self, y: int) -> tuple[int, int, int]:
        """(bin, quotient, remainder) from the key's own bit fields."""
        qb = y >> self._rb
        return qb // self._b_eff, qb % self._b_eff, y & self._rmask

    def join_key(self, b: int, q: int, r: int) -> int:
        return ((b * self.params.b_eff + q) << self.params.remainder_bits) | r

    def _check_key(self, y: int) -> None:
        if not 0 <= y < self.universe:
            raise OutOfUniverseError(f"key {y} outside [0, {self.universe})")

    def insert(self, y: int) -> None:
        """Add one copy of y; bin first, spare when the bin is full."""
        if not 0 <= y < self.universe:
            raise OutOfUniverseError(f"key {y} outside [0, {self.universe})")
        if self.live_count == self._capacity:
            raise AtCapacityError(f"dictionary already holds {self._capacity} keys")
        rb = self._rb
        qb = y >> rb
        if not self.bins[qb // self._b_eff].insert(
            qb % self._b_eff, y & self._rmask
        ):
            if not self.spare.insert(y):
                raise FilterOverflowError("spare is full")
            if self.spare.live_count > self.spare_peak:
                self.spare_peak = self.spare.live_count
        self.live_count += 1

    def delete(self, y: int) -> None:
        """Remove one copy of y; bin first, then the spare."""
        if not 0 <= y < self.universe:
            raise OutOfUniverseError(f"key {y} outside [0, {self.universe})")
        rb = self._rb
        qb = y >> rb
        if not self.bins[qb // self._b_eff].delete(
            qb % self._b_eff, y & self._rmask
        ):
            if not self.spare.delete(y):
                raise NotFoundError(y)
        self.live_count -= 1

    def query(self, y: int) -> bool:
        if not 0 <= y < self.universe:
            raise OutOfUniverseError(f"key {y} outside [0, {self.universe})")
        qb = y >> self._rb
        if self.bins[qb // self._b_eff].query(
            qb % self._b_eff, y & self._rmask
        ):
            return True
        return self.spare.query(y) > 0

    def multiplicity(self, y: int) -> int:
        """Exact stored multiplicity (bin copies plus spare copies)."""
        self._check_key(y)
        b, q, r = self.split_key(y)
        return self.bins[b].query(q, r) + self.spare.query(y)

    @property
    def bits_used(self) -> int:
        per_pocket = (
            self.params.b_eff
            + self.params.bin_capacity * (1 + self.params.remainder_bits)
        )
        return self.params.m * per_pocket + self.spare.bits_used

    def stats(self) -> RmsStats:
        histogram = [0] * (self.params.bin_capacity + 1)
        full = 0
        for pocket in self.bins:
            histogram[pocket.occupancy] += 1
            if pocket.is_full:
                full += 1
        return RmsStats(
            live_count=self.live_count,
            spare_live=self.spare.live_count,
            spare_peak=self.spare_peak,
            full_bins=full,
            bin_load_histogram=tuple(histogram),
            bits_used=self.bits_used,
        )

    def check_invariants(self) -> None:
        total = sum(p.occupancy for p in self.bins) + self.spare.live_count
        assert total == self.live_count, "occupancy + spare != live_count"
        self.spare.check_invariants()
