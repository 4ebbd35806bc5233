"""Per-bin multiset dictionary in a header+body bit layout.

A pocket stores up to ``n_prime`` (quotient, remainder) pairs from the
universe [b_eff * 2**remainder_bits].  Per-quotient counts live in the
header as unary runs ("1"*count + "0" for each quotient, so exactly
b_eff zeros at all times), and the remainders live in the body in
nondecreasing (q, r) order.  Duplicate pairs are simply repeated, which
is what makes the pocket a multiset.  The whole structure is a fixed
allocation of (b_eff + n') + n' * remainder_bits bits and every
operation touches a bounded span of it.

Bit conventions: position i of a bitstring is bit i of the backing int
(so the string form reads low bit first), and body slot s occupies bits
[s*rb, (s+1)*rb).
"""

from __future__ import annotations

from .errors import PocketOverWordError

DEFAULT_WORD_BUDGET = 4
WORD_BITS = 64


class AccessMeter:
    """Counts the words each pocket operation touches."""

    __slots__ = ("ops", "max_words", "budget", "violations")

    def __init__(self, budget: int = DEFAULT_WORD_BUDGET):
        self.ops = 0
        self.max_words = 0
        self.budget = budget
        self.violations = 0

    def note(self, words: int) -> None:
        self.ops += 1
        if words > self.max_words:
            self.max_words = words
        if words > self.budget:
            self.violations += 1


class PocketDictionary:
    __slots__ = (
        "b_eff", "n_prime", "remainder_bits", "header", "body", "occupancy",
        "meter", "_rmask", "_header_alloc",
    )

    def __init__(
        self,
        b_eff: int,
        n_prime: int,
        remainder_bits: int,
        word_budget: int = DEFAULT_WORD_BUDGET,
        meter: AccessMeter | None = None,
    ):
        if b_eff < 1 or n_prime < 1 or remainder_bits < 1:
            raise ValueError("pocket dimensions must be positive")
        total = b_eff + n_prime + n_prime * remainder_bits
        if total > word_budget * WORD_BITS:
            raise PocketOverWordError(
                f"pocket of {total} bits exceeds {word_budget} words"
            )
        self.b_eff = b_eff
        self.n_prime = n_prime
        self.remainder_bits = remainder_bits
        self.header = 0
        self.body = 0
        self.occupancy = 0
        self.meter = meter
        self._rmask = (1 << remainder_bits) - 1
        self._header_alloc = b_eff + n_prime

    @property
    def total_bits(self) -> int:
        return self._header_alloc + self.n_prime * self.remainder_bits

    def _zero_positions(self, q: int) -> tuple[int, int]:
        """Positions of the (q-1)-th and q-th zeros of the live header
        (zero index -1 means the virtual position before the string)."""
        live_mask = (1 << (self.b_eff + self.occupancy)) - 1
        z = self.header ^ live_mask  # zeros become set bits
        if q:
            for _ in range(q - 1):
                z &= z - 1
            i = (z & -z).bit_length() - 1
            z &= z - 1
        else:
            i = -1
        j = (z & -z).bit_length() - 1
        return i, j

    def select_group(self, q: int) -> tuple[int, int]:
        """Body slot index of quotient q's first remainder, and the
        group's size: start = i - (q-1), count = j - i - 1."""
        if not 0 <= q < self.b_eff:
            raise ValueError(f"quotient {q} out of range [0, {self.b_eff})")
        i, j = self._zero_positions(q)
        return i - q + 1, j - i - 1

    def _slot(self, s: int) -> int:
        return (self.body >> (s * self.remainder_bits)) & self._rmask

    def _note_words(self, occ: int) -> None:
        """Words covered by the live header and body regions the op may
        have touched (occ = the larger of occupancy before/after)."""
        meter = self.meter
        head_end = -(-(self.b_eff + occ) // WORD_BITS)
        body_bits = occ * self.remainder_bits
        if body_bits:
            start2 = self._header_alloc // WORD_BITS
            end2 = -(-(self._header_alloc + body_bits) // WORD_BITS)
            words = head_end + max(0, end2 - max(start2, head_end))
        else:
            words = head_end
        meter.note(words)

    def insert(self, q: int, r: int) -> bool:
        """Add one copy of (q, r); False when the pocket is full."""
        if not 0 <= q < self.b_eff:
            raise ValueError(f"quotient {q} out of range [0, {self.b_eff})")
        if not 0 <= r <= self._rmask:
            raise ValueError(f"remainder {r} out of range")
        occ = self.occupancy
        if occ == self.n_prime:
            return False
        header = self.header
        z = header ^ ((1 << (self.b_eff + occ)) - 1)
        if q:
            for _ in range(q - 1):
                z &= z - 1
            i = (z & -z).bit_length() - 1
            z &= z - 1
        else:
            i = -1
        j = (z & -z).bit_length() - 1
        start = i - q + 1
        count = j - i - 1
        rb = self.remainder_bits
        body = self.body
        rmask = self._rmask
        p = start
        for s in range(start, start + count):
            if (body >> (s * rb)) & rmask >= r:
                break
            p = s + 1
        off = p * rb
        upper = body >> off
        self.body = (body & ((1 << off) - 1)) | ((r | (upper << rb)) << off)
        upper = header >> j
        self.header = (header & ((1 << j) - 1)) | (((upper << 1) | 1) << j)
        self.occupancy = occ + 1
        if self.meter is not None:
            self._note_words(occ + 1)
        return True

    def delete(self, q: int, r: int) -> bool:
        """Remove one copy of (q, r); False when no copy is stored."""
        if not 0 <= q < self.b_eff:
            raise ValueError(f"quotient {q} out of range [0, {self.b_eff})")
        if not 0 <= r <= self._rmask:
            raise ValueError(f"remainder {r} out of range")
        occ = self.occupancy
        header = self.header
        z = header ^ ((1 << (self.b_eff + occ)) - 1)
        if q:
            for _ in range(q - 1):
                z &= z - 1
            i = (z & -z).bit_length() - 1
            z &= z - 1
        else:
            i = -1
        j = (z & -z).bit_length() - 1
        start = i - q + 1
        count = j - i - 1
        rb = self.remainder_bits
        body = self.body
        rmask = self._rmask
        for s in range(start, start + count):
            v = (body >> (s * rb)) & rmask
            if v == r:
                off = s * rb
                self.body = (body & ((1 << off) - 1)) | (
                    (body >> (off + rb)) << off
                )
                self.header = (header & ((1 << (j - 1)) - 1)) | (
                    (header >> j) << (j - 1)
                )
                self.occupancy = occ - 1
                if self.meter is not None:
                    self._note_words(occ)
                return True
            if v > r:
                break
        return False

    def query(self, q: int, r: int) -> int:
        """Multiplicity of (q, r)."""
        if not 0 <= q < self.b_eff:
            raise ValueError(f"quotient {q} out of range [0, {self.b_eff})")
        if not 0 <= r <= self._rmask:
            raise ValueError(f"remainder {r} out of range")
        occ = self.occupancy
        z = self.header ^ ((1 << (self.b_eff + occ)) - 1)
        if q:
            for _ in range(q - 1):
                z &= z - 1
            i = (z & -z).bit_length() - 1
            z &= z - 1
        else:
            i = -1
        j = (z & -z).bit_length() - 1
        start = i - q + 1
        count = j - i - 1
        rb = self.remainder_bits
        body = self.body
        rmask = self._rmask
        hits = 0
        for s in range(start, start + count):
            v = (body >> (s * rb)) & rmask
            if v == r:
                hits += 1
            elif v > r:
                break
        if self.meter is not None:
            self._note_words(occ)
        return hits

    @property
    def is_full(self) -> bool:
        return self.occupancy == self.n_prime

    def dump(self) -> str:
        """Stable debug form: ``H:<bits> B:<bits> occ:<k>``; header bits in
        position order, body as rb-bit remainders."""
        live = self.b_eff + self.occupancy
        hbits = "".join(
            "1" if (self.header >> i) & 1 else "0" for i in range(live)
        )
        rb = self.remainder_bits
        bbits = "".join(
            format(self._slot(s), f"0{rb}b") for s in range(self.occupancy)
        )
        return f"H:{hbits} B:{bbits} occ:{self.occupancy}"

    def check_invariants(self) -> None:
        """Structural checks for tests: exact zero count, sorted body,
        clean padding, fixed allocation."""
        live = self.b_eff + self.occupancy
        assert self.header >> live == 0, "header bits beyond live region"
        ones = self.header.bit_count()
        assert ones == self.occupancy, "header ones != occupancy"
        assert live - ones == self.b_eff, "header zeros != b_eff"
        assert self.occupancy <= self.n_prime
        assert self.body >> (self.occupancy * self.remainder_bits) == 0, \
            "body bits beyond occupancy"
        assert self.total_bits == (
            self.b_eff + self.n_prime + self.n_prime * self.remainder_bits
        )
        # body nondecreasing within each quotient group
        for q in range(self.b_eff):
            start, count = self.select_group(q)
            prev = -1
            for s in range(start, start + count):
                v = self._slot(s)
                assert v >= prev, f"group {q} not sorted"
                prev = v
