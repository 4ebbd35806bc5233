"""Seeded hash families and the keyed permutation used for routing.

A plan bundles: a single-round Feistel permutation of the input universe
(bijective, so no information is lost before hashing), a k-wise
polynomial for the bin index, two pairwise-independent affine maps for
the quotient and remainder, and a pairwise affine reduction straight
onto the dictionary's key space.  All polynomial arithmetic is over the
Mersenne field 2**61 - 1, which exceeds every domain used here.

The top ``m_bits`` of the permuted value select one of M subsets; the
residual low bits feed the bin/quotient/remainder hashes.  M is kept a
power of two so the (subset, residual) split tiles the universe exactly.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import OutOfUniverseError
from .params import FilterParams

MERSENNE_61 = (1 << 61) - 1
MAX_K_INDEPENDENCE = 64

PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PairwiseHash:
    """x -> ((a*x + b) mod p) mod range, a != 0; 2-independent."""

    prime: int
    a: int
    b: int
    range_: int

    def __call__(self, x: int) -> int:
        return ((self.a * x + self.b) % self.prime) % self.range_


@dataclass(frozen=True)
class KWiseHash:
    """Degree-(k-1) polynomial mod p, reduced to [range]; k-independent."""

    prime: int
    coefficients: tuple[int, ...]
    range_: int

    def __call__(self, x: int) -> int:
        p = self.prime
        acc = 0
        for c in self.coefficients:
            acc = (acc * x + c) % p
        return acc % self.range_


@dataclass(frozen=True)
class FeistelPermutation:
    """Keyed bijection on [2**domain_bits].

    One XOR round: the high half is masked with a k-wise polynomial of
    the low half and stays on top, so the subset index (taken from the
    high bits) is always hashed.  The map is an involution, hence
    ``invert`` and ``evaluate`` coincide.
    """

    domain_bits: int
    left_bits: int
    right_bits: int
    round_fn: KWiseHash

    def evaluate(self, x: int) -> int:
        right_mask = (1 << self.right_bits) - 1
        r = x & right_mask
        left = (x >> self.right_bits) ^ self.round_fn(r)
        return (left << self.right_bits) | r

    def invert(self, y: int) -> int:
        return self.evaluate(y)


class Located(NamedTuple):
    subset: int
    bin: int
    quotient: int
    remainder: int


@dataclass(frozen=True)
class HashPlan:
    seed: int
    u_hat_bits: int
    m_bits: int                # M = 2**m_bits subsets
    k_independence: int
    permutation: FeistelPermutation
    f_b: KWiseHash             # residual -> bin in [m]
    f_q: PairwiseHash          # residual -> quotient in [b_eff]
    g_r: PairwiseHash          # residual -> remainder in [2**rb]
    carter: PairwiseHash       # x -> reduced key, the plain one-hash reduction
    m: int
    b_eff: int
    remainder_bits: int

    @property
    def subset_count(self) -> int:
        return 1 << self.m_bits

    @property
    def residual_bits(self) -> int:
        return self.u_hat_bits - self.m_bits


def k_independence_for(n: int) -> int:
    """Independence of the bin hash and round function: n**0.1 + n**0.075,
    capped so evaluation stays constant-time."""
    return max(2, min(MAX_K_INDEPENDENCE, math.ceil(n**0.1 + n ** (3 / 40))))


def build_plan(
    params: FilterParams, seed: int, subset_count: int | None = None
) -> HashPlan:
    """Draw all hash coefficients deterministically from (params, seed).

    ``subset_count`` defaults to ~n**0.9 rounded up to a power of two and
    may be forced down to 1 for testing.
    """
    if subset_count is None:
        m_bits = math.ceil(0.9 * math.log2(params.n))
    else:
        if subset_count < 1:
            raise ValueError("subset_count must be >= 1")
        m_bits = (subset_count - 1).bit_length()
    if m_bits >= params.u_hat_bits:
        raise ValueError("subset count must leave residual bits")

    rng = random.Random(seed)
    k = k_independence_for(params.n)
    p = MERSENNE_61

    left_bits = (params.u_hat_bits + 1) // 2
    right_bits = params.u_hat_bits - left_bits
    round_fn = KWiseHash(
        prime=p,
        coefficients=tuple(rng.randrange(p) for _ in range(k)),
        range_=1 << left_bits,
    )
    permutation = FeistelPermutation(
        domain_bits=params.u_hat_bits,
        left_bits=left_bits,
        right_bits=right_bits,
        round_fn=round_fn,
    )
    f_b = KWiseHash(
        prime=p,
        coefficients=tuple(rng.randrange(p) for _ in range(k)),
        range_=params.m,
    )
    f_q = PairwiseHash(
        prime=p, a=rng.randrange(1, p), b=rng.randrange(p),
        range_=params.b_eff,
    )
    g_r = PairwiseHash(
        prime=p, a=rng.randrange(1, p), b=rng.randrange(p),
        range_=1 << params.remainder_bits,
    )
    carter = PairwiseHash(
        prime=p, a=rng.randrange(1, p), b=rng.randrange(p),
        range_=params.reduced_universe,
    )
    return HashPlan(
        seed=seed,
        u_hat_bits=params.u_hat_bits,
        m_bits=m_bits,
        k_independence=k,
        permutation=permutation,
        f_b=f_b,
        f_q=f_q,
        g_r=g_r,
        carter=carter,
        m=params.m,
        b_eff=params.b_eff,
        remainder_bits=params.remainder_bits,
    )


def _check_universe(plan: HashPlan, x: int) -> None:
    if not 0 <= x < (1 << plan.u_hat_bits):
        raise OutOfUniverseError(
            f"key {x} outside universe [0, 2**{plan.u_hat_bits})"
        )


def permute(plan: HashPlan, x: int) -> tuple[int, int]:
    """Split x bijectively into (subset index, residual)."""
    _check_universe(plan, x)
    y = plan.permutation.evaluate(x)
    res_bits = plan.residual_bits
    return y >> res_bits, y & ((1 << res_bits) - 1)


def invert_permute(plan: HashPlan, h1: int, h2: int) -> int:
    """Recover x from its (subset, residual) pair."""
    y = (h1 << plan.residual_bits) | h2
    return plan.permutation.invert(y)


def locate(plan: HashPlan, x: int) -> Located:
    """Route x to its (subset, bin, quotient, remainder)."""
    _check_universe(plan, x)
    p = MERSENNE_61
    y = plan.permutation.evaluate(x)
    res_bits = plan.residual_bits
    h1 = y >> res_bits
    h2 = y & ((1 << res_bits) - 1)
    acc = 0
    for c in plan.f_b.coefficients:
        acc = (acc * h2 + c) % p
    b = acc % plan.m
    fq = plan.f_q
    q = ((fq.a * h2 + fq.b) % p) % fq.range_
    gr = plan.g_r
    r = ((gr.a * h2 + gr.b) % p) % gr.range_
    return Located(h1, b, q, r)


def reduced_key(plan: HashPlan, x: int) -> int:
    """The dictionary key for x: the (bin, quotient, remainder) triple
    packed as an integer in [m * b_eff * 2**rb]."""
    loc = locate(plan, x)
    return ((loc.bin * plan.b_eff + loc.quotient) << plan.remainder_bits) | loc.remainder


def carter_key(plan: HashPlan, x: int) -> int:
    """Alternative reduction: a single pairwise hash of x onto the key
    space, routing by the key's own bits."""
    _check_universe(plan, x)
    return plan.carter(x)


# --- batch kernels -----------------------------------------------------
#
# uint64 arithmetic mod 2**61 - 1 via 30/31-bit limbs; used by the
# harness to hash whole workloads at once.  Must agree bit-for-bit with
# the scalar path (tests enforce this).  Large inputs are processed in
# cache-sized chunks; the many intermediate arrays otherwise spill to
# memory and dominate the runtime.

_BATCH_CHUNK = 1 << 16

_P = np.uint64(MERSENNE_61)
_U61 = np.uint64(61)
_U60 = np.uint64(60)
_U31 = np.uint64(31)
_U30 = np.uint64(30)
_M30 = np.uint64((1 << 30) - 1)
_M31 = np.uint64((1 << 31) - 1)
_ONE = np.uint64(1)


def _mulmod(x: np.ndarray, y) -> np.ndarray:
    x1 = x >> _U30
    x0 = x & _M30
    y = np.uint64(y) if np.isscalar(y) or isinstance(y, int) else y
    y1 = y >> _U30
    y0 = y & _M30
    p11 = x1 * y1
    p10 = x1 * y0 + x0 * y1
    p00 = x0 * y0
    s = (p11 >> _ONE) + ((p11 & _ONE) << _U60)
    s = s + (p10 >> _U31) + ((p10 & _M31) << _U30)
    s = s + p00
    s = (s & _P) + (s >> _U61)
    s = (s & _P) + (s >> _U61)
    return np.where(s >= _P, s - _P, s)


def _polymod(coefficients: tuple[int, ...], x: np.ndarray) -> np.ndarray:
    acc = np.full(x.shape, np.uint64(coefficients[0]), dtype=np.uint64)
    for c in coefficients[1:]:
        acc = _mulmod(acc, x) + np.uint64(c)
        acc = (acc & _P) + (acc >> _U61)
        acc = np.where(acc >= _P, acc - _P, acc)
    return acc


def _affine(h: PairwiseHash, x: np.ndarray) -> np.ndarray:
    acc = _mulmod(x, h.a) + np.uint64(h.b)
    acc = (acc & _P) + (acc >> _U61)
    acc = np.where(acc >= _P, acc - _P, acc)
    return acc % np.uint64(h.range_)


def _chunked(fn, xs: np.ndarray) -> np.ndarray:
    if len(xs) <= _BATCH_CHUNK:
        return fn(xs)
    return np.concatenate(
        [fn(xs[i : i + _BATCH_CHUNK]) for i in range(0, len(xs), _BATCH_CHUNK)]
    )


def permute_batch(plan: HashPlan, xs: np.ndarray) -> np.ndarray:
    """Vectorized permutation; returns the permuted values."""
    perm = plan.permutation
    rbits = np.uint64(perm.right_bits)
    rmask = np.uint64((1 << perm.right_bits) - 1)
    lmask = np.uint64((1 << perm.left_bits) - 1)

    def kernel(chunk: np.ndarray) -> np.ndarray:
        r = chunk & rmask
        f = _polymod(perm.round_fn.coefficients, r) & lmask
        left = (chunk >> rbits) ^ f
        return (left << rbits) | r

    return _chunked(kernel, xs)


def reduced_key_batch(plan: HashPlan, xs: np.ndarray) -> np.ndarray:
    """Vectorized ``reduced_key`` over a uint64 array."""

    def kernel(chunk: np.ndarray) -> np.ndarray:
        y = permute_batch(plan, chunk)
        h2 = y & np.uint64((1 << plan.residual_bits) - 1)
        b = _polymod(plan.f_b.coefficients, h2) % np.uint64(plan.m)
        q = _affine(plan.f_q, h2)
        r = _affine(plan.g_r, h2)
        return (
            (b * np.uint64(plan.b_eff) + q) << np.uint64(plan.remainder_bits)
        ) | r

    return _chunked(kernel, xs)


def carter_key_batch(plan: HashPlan, xs: np.ndarray) -> np.ndarray:
    return _chunked(lambda chunk: _affine(plan.carter, chunk), xs)


# --- serialization -----------------------------------------------------

def plan_to_json(plan: HashPlan) -> str:
    """Serialize a plan for reproducibility; round-trips exactly."""
    doc = {
        "version": PLAN_SCHEMA_VERSION,
        "seed": plan.seed,
        "M": plan.subset_count,
        "prime": MERSENNE_61,
        "u_hat_bits": plan.u_hat_bits,
        "m_bits": plan.m_bits,
        "k_independence": plan.k_independence,
        "dims": {
            "m": plan.m,
            "b_eff": plan.b_eff,
            "remainder_bits": plan.remainder_bits,
        },
        "feistel": {
            "domain_bits": plan.permutation.domain_bits,
            "left_bits": plan.permutation.left_bits,
            "right_bits": plan.permutation.right_bits,
            "round_coefficients": list(plan.permutation.round_fn.coefficients),
        },
        "f_b": {"coefficients": list(plan.f_b.coefficients), "range": plan.f_b.range_},
        "f_q": {"a": plan.f_q.a, "b": plan.f_q.b, "range": plan.f_q.range_},
        "g_r": {"a": plan.g_r.a, "b": plan.g_r.b, "range": plan.g_r.range_},
        "carter": {"a": plan.carter.a, "b": plan.carter.b, "range": plan.carter.range_},
    }
    return json.dumps(doc, indent=2)


def plan_from_json(text: str) -> HashPlan:
    doc = json.loads(text)
    if doc.get("version") != PLAN_SCHEMA_VERSION:
        raise ValueError(f"unsupported plan version {doc.get('version')}")
    p = doc["prime"]
    feistel = doc["feistel"]
    permutation = FeistelPermutation(
        domain_bits=feistel["domain_bits"],
        left_bits=feistel["left_bits"],
        right_bits=feistel["right_bits"],
        round_fn=KWiseHash(
            prime=p,
            coefficients=tuple(feistel["round_coefficients"]),
            range_=1 << feistel["left_bits"],
        ),
    )

    def _pairwise(key: str) -> PairwiseHash:
        d = doc[key]
        return PairwiseHash(prime=p, a=d["a"], b=d["b"], range_=d["range"])

    return HashPlan(
        seed=doc["seed"],
        u_hat_bits=doc["u_hat_bits"],
        m_bits=doc["m_bits"],
        k_independence=doc["k_independence"],
        permutation=permutation,
        f_b=KWiseHash(
            prime=p,
            coefficients=tuple(doc["f_b"]["coefficients"]),
            range_=doc["f_b"]["range"],
        ),
        f_q=_pairwise("f_q"),
        g_r=_pairwise("g_r"),
        carter=_pairwise("carter"),
        m=doc["dims"]["m"],
        b_eff=doc["dims"]["b_eff"],
        remainder_bits=doc["dims"]["remainder_bits"],
    )
