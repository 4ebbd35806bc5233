"""Public dynamic filter over a power-of-two universe.

Dense case: every key is reduced to a point of a small key space (the
packed (bin, quotient, remainder) routing of the hash plan, or a single
pairwise hash of the key in ``carter`` mode) and the reduced multiset
is stored exactly in the two-level dictionary.  Queries then answer
membership of the reduced key, so members are never missed and a
non-member answers true only when its reduced key collides with a
stored one, which happens with probability about epsilon.

Sparse case (very small epsilon): each key owns a slot holding a k-bit
fingerprint, k = log2(1/epsilon), managed by the retrieval store;
duplicate inserts are counted so deletes preserve multiset semantics.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import AtCapacityError, NotFoundError, OutOfUniverseError
from .hashing import (
    MERSENNE_61,
    HashPlan,
    PairwiseHash,
    build_plan,
)
from .params import CaseKind, FilterParams, derive_params
from .pocket import AccessMeter
from .retrieval import RetrievalStats, RetrievalStore
from .rmsdict import RmsDictionary, RmsStats

REDUCTION_MODES = ("locate", "carter")


@dataclass(frozen=True)
class FilterStats:
    mode: str
    reduction: str | None
    live_count: int
    bits_used: int
    plan_bits: int
    dense: RmsStats | None
    sparse: RetrievalStats | None


def _plan_bits(plan: HashPlan) -> int:
    """Representation size of the drawn coefficients (61 bits each)."""
    coeffs = (
        len(plan.permutation.round_fn.coefficients)
        + len(plan.f_b.coefficients)
        + 6  # three affine pairs
    )
    return coeffs * 61 + 64  # seed


def _make_reducer(plan: HashPlan):
    """Closure computing the packed reduced key; bit-identical to
    ``hashing.reduced_key`` but with constants bound locally."""
    perm = plan.permutation
    rc = perm.round_fn.coefficients
    p = MERSENNE_61
    rbits = perm.right_bits
    rmask = (1 << rbits) - 1
    lmask = (1 << perm.left_bits) - 1
    res_mask = (1 << plan.residual_bits) - 1
    fb = plan.f_b.coefficients
    m = plan.m
    b_eff = plan.b_eff
    rb = plan.remainder_bits
    qa, qb, qrange = plan.f_q.a, plan.f_q.b, plan.f_q.range_
    ga, gb, grange = plan.g_r.a, plan.g_r.b, plan.g_r.range_

    def reduce(x: int) -> int:
        low = x & rmask
        acc = 0
        for c in rc:
            acc = (acc * low + c) % p
        y = (((x >> rbits) ^ (acc & lmask)) << rbits) | low
        h2 = y & res_mask
        acc = 0
        for c in fb:
            acc = (acc * h2 + c) % p
        b = acc % m
        q = ((qa * h2 + qb) % p) % qrange
        r = ((ga * h2 + gb) % p) % grange
        return ((b * b_eff + q) << rb) | r

    return reduce


def _make_carter_reducer(plan: HashPlan):
    a, b, rng, p = plan.carter.a, plan.carter.b, plan.carter.range_, MERSENNE_61

    def reduce(x: int) -> int:
        return ((a * x + b) % p) % rng

    return reduce


class DynamicFilter:
    """Dynamic approximate-membership filter with one-sided error."""

    def __init__(
        self,
        n: int,
        epsilon: float,
        seed: int = 0,
        overrides: dict | None = None,
        reduction: str = "locate",
        subset_count: int | None = None,
        meter: AccessMeter | None = None,
    ):
        if reduction not in REDUCTION_MODES:
            raise ValueError(f"reduction must be one of {REDUCTION_MODES}")
        self.params: FilterParams = derive_params(n, epsilon, overrides)
        self.seed = seed
        self.reduction = reduction
        self._u_hat = self.params.u_hat
        rng = random.Random(seed)
        plan_seed = rng.getrandbits(64)
        store_seed = rng.getrandbits(64)
        fp_a = rng.randrange(1, MERSENNE_61)
        fp_b = rng.randrange(MERSENNE_61)

        if self.params.case_kind is CaseKind.DENSE:
            self.plan = build_plan(self.params, plan_seed, subset_count)
            self.rms = RmsDictionary(self.params, store_seed, meter=meter)
            self.retrieval = None
            self.fp_hash = None
            self._reduce = (
                _make_reducer(self.plan)
                if reduction == "locate"
                else _make_carter_reducer(self.plan)
            )
        else:
            self.plan = None
            self.rms = None
            self.fp_hash = PairwiseHash(
                prime=MERSENNE_61,
                a=fp_a,
                b=fp_b,
                range_=1 << self.params.epsilon_log2,
            )
            self.retrieval = RetrievalStore(
                n=self.params.n,
                value_bits=self.params.epsilon_log2,
                u_hat_bits=self.params.u_hat_bits,
                seed=store_seed,
            )
            self._reduce = None

    @property
    def mode(self) -> CaseKind:
        return self.params.case_kind

    @property
    def live_count(self) -> int:
        if self.rms is not None:
            return self.rms.live_count
        return self.retrieval.live_count

    def reduce(self, x: int) -> int:
        """Dense-mode reduced key for x (exposed for the harness oracle)."""
        return self._reduce(x)

    def _check_universe(self, x: int) -> None:
        if not 0 <= x < self._u_hat:
            raise OutOfUniverseError(
                f"key {x} outside universe [0, 2**{self.params.u_hat_bits})"
            )

    def insert(self, x: int) -> None:
        self._check_universe(x)
        if self.rms is not None:
            self.rms.insert(self._reduce(x))
            return
        if self.retrieval.live_count == self.params.n:
            raise AtCapacityError(f"filter already holds {self.params.n} keys")
        self.retrieval.insert(x, self.fp_hash(x))

    def delete(self, x: int) -> None:
        self._check_universe(x)
        if self.rms is not None:
            try:
                self.rms.delete(self._reduce(x))
            except NotFoundError:
                raise NotFoundError(x) from None
            return
        if not self.retrieval.delete(x):
            raise NotFoundError(x)

    def query(self, x: int) -> bool:
        self._check_universe(x)
        if self.rms is not None:
            return self.rms.query(self._reduce(x))
        value = self.retrieval.query(x)
        return value is not None and value == self.fp_hash(x)

    def __contains__(self, x: int) -> bool:
        return self.query(x)

    def stats(self) -> FilterStats:
        if self.rms is not None:
            dense = self.rms.stats()
            plan_bits = _plan_bits(self.plan)
            return FilterStats(
                mode=self.params.case_kind.value,
                reduction=self.reduction,
                live_count=dense.live_count,
                bits_used=dense.bits_used + plan_bits,
                plan_bits=plan_bits,
                dense=dense,
                sparse=None,
            )
        sparse = self.retrieval.stats()
        plan_bits = 2 * 61
        return FilterStats(
            mode=self.params.case_kind.value,
            reduction=None,
            live_count=sparse.live_count,
            bits_used=sparse.bits_used + plan_bits,
            plan_bits=plan_bits,
            dense=None,
            sparse=sparse,
        )
