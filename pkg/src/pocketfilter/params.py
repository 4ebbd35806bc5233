"""Parameter derivation for the filter construction.

All sizing flows from the capacity ``n`` and the false-positive bound
``epsilon = 2**-k``: the reduced universe ``u = n/epsilon``, the bin
geometry (expected load, slack, per-bin capacity), the spare capacity,
and the dense/sparse case decision.  The bin slack ``delta`` and the
expected bin load are mutually defined, so the raw load is resolved by
fixed-point iteration and then floored to a usable integer ``b_eff``;
``delta`` is recomputed from ``b_eff`` since that is the load the bins
actually provision for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    CapacityTooSmallError,
    InvalidEpsilonError,
    PocketOverWordError,
)

MIN_CAPACITY = 1 << 10
DEFAULT_B_MIN = 8
DEFAULT_C_DENSE = 4.0
DEFAULT_WORD_BUDGET = 4
WORD_BITS = 64
# universe exponent: u_hat = 2**min(floor(4*log2(n)), 60); capped so every
# hash domain stays below the 2**61 - 1 prime field
MAX_UNIVERSE_BITS = 60
FIXED_POINT_TOL = 1e-9
FIXED_POINT_MAX_ITERS = 100

_OVERRIDE_KEYS = frozenset(
    {
        "b_min",
        "b_eff",
        "bin_capacity",
        "spare_capacity",
        "c_dense",
        "word_budget",
        "u_hat_bits",
        "case",
    }
)


class CaseKind(Enum):
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass(frozen=True)
class FilterParams:
    """Derived construction parameters; immutable once computed."""

    n: int
    epsilon: float
    epsilon_log2: int          # k, with epsilon = 2**-k
    u: int                     # reduced-universe size n * 2**k
    b_prime: float             # ln(n) / ln(1 + u/n)
    bin_mean: float            # raw expected bin load from the fixed point
    delta: float               # slack log2(log2(n)) / sqrt(b_eff)
    b_eff: int                 # effective quotient range per bin
    m: int                     # number of bins
    bin_capacity: int          # n' = ceil((1 + delta) * b_eff)
    spare_capacity: int        # n_s = ceil(n / log2(n)**3)
    remainder_bits: int
    quotient_bits: int
    bin_index_bits: int
    case_kind: CaseKind
    u_hat_bits: int            # input universe is [2**u_hat_bits]
    b_min: int
    c_dense: float
    word_budget: int
    word_bits: int
    fixed_point_iterations: int

    @property
    def u_hat(self) -> int:
        return 1 << self.u_hat_bits

    @property
    def pocket_bits(self) -> int:
        """Allocated bits per bin: header (b_eff + n') plus body (n' * rb)."""
        return (self.b_eff + self.bin_capacity
                + self.bin_capacity * self.remainder_bits)

    @property
    def reduced_universe(self) -> int:
        """Key space of the reduced dictionary: m * b_eff * 2**rb >= u."""
        return (self.m * self.b_eff) << self.remainder_bits


def _epsilon_exponent(n: int, epsilon: float) -> int:
    """Validate epsilon = 2**-k in (0, 1/2] and return k.

    The lower bound is n / u_hat (below that an exact dictionary is the
    right structure); it is checked once the universe size is resolved.
    """
    if not (0.0 < epsilon <= 0.5):
        raise InvalidEpsilonError(f"epsilon must be in (0, 1/2], got {epsilon}")
    mantissa, exp = math.frexp(epsilon)
    if mantissa != 0.5:
        raise InvalidEpsilonError(f"epsilon must be a power of two, got {epsilon}")
    return 1 - exp


def _validate_capacity(n: int) -> None:
    if n < MIN_CAPACITY:
        raise CapacityTooSmallError(f"n must be at least {MIN_CAPACITY}, got {n}")


def _fixed_point_load(n: int, b_prime: float) -> tuple[float, float, int]:
    """Resolve the mutually-defined (delta, load) pair.

    delta = log2(log2 n) / sqrt(B) and B = ln2 * B' / (4 * (1 + delta));
    iteration starts from delta seeded with B' and contracts quickly.
    Returns (load, last_delta_step, iterations).
    """
    loglog = math.log2(math.log2(n))
    delta = loglog / math.sqrt(b_prime)
    load = math.log(2) * b_prime / (4.0 * (1.0 + delta))
    step = math.inf
    iterations = 0
    while step > FIXED_POINT_TOL and iterations < FIXED_POINT_MAX_ITERS:
        new_delta = loglog / math.sqrt(load)
        step = abs(new_delta - delta)
        delta = new_delta
        load = math.log(2) * b_prime / (4.0 * (1.0 + delta))
        iterations += 1
    return load, step, iterations


def select_case(
    n: int, epsilon: float, c_dense: float = DEFAULT_C_DENSE
) -> CaseKind:
    """Dense iff log2(1/epsilon) <= c_dense * log2(log2(n))."""
    _validate_capacity(n)
    k = _epsilon_exponent(n, epsilon)
    if k <= c_dense * math.log2(math.log2(n)):
        return CaseKind.DENSE
    return CaseKind.SPARSE


def derive_params(
    n: int, epsilon: float, overrides: dict | None = None
) -> FilterParams:
    """Compute all construction parameters for capacity n and FPR epsilon.

    ``overrides`` may pin b_min, b_eff, bin_capacity, spare_capacity,
    c_dense, word_budget, u_hat_bits, or case; everything else is derived.
    Pure: identical inputs give bit-identical outputs.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - _OVERRIDE_KEYS
    if unknown:
        raise ValueError(f"unknown override keys: {sorted(unknown)}")

    _validate_capacity(n)
    k = _epsilon_exponent(n, epsilon)
    u = n << k

    b_prime = math.log(n) / math.log(1 + (1 << k))
    bin_mean, _, iterations = _fixed_point_load(n, b_prime)

    b_min = int(overrides.get("b_min", DEFAULT_B_MIN))
    b_eff = int(overrides.get("b_eff", max(math.floor(bin_mean), b_min)))
    if b_eff < 1:
        raise ValueError(f"b_eff must be positive, got {b_eff}")

    loglog = math.log2(math.log2(n))
    delta = loglog / math.sqrt(b_eff)

    m = -(-n // b_eff)  # ceil
    bin_capacity = int(
        overrides.get("bin_capacity", math.ceil((1.0 + delta) * b_eff))
    )
    if bin_capacity < 1:
        raise ValueError(f"bin_capacity must be positive, got {bin_capacity}")
    spare_capacity = int(
        overrides.get("spare_capacity", math.ceil(n / math.log2(n) ** 3))
    )

    c_dense = float(overrides.get("c_dense", DEFAULT_C_DENSE))
    if "case" in overrides:
        case_kind = CaseKind(overrides["case"])
    else:
        case_kind = (
            CaseKind.DENSE if k <= c_dense * loglog else CaseKind.SPARSE
        )

    u_hat_bits = int(
        overrides.get(
            "u_hat_bits", min(math.floor(4 * math.log2(n)), MAX_UNIVERSE_BITS)
        )
    )
    if (1 << u_hat_bits) < u:
        raise InvalidEpsilonError(
            f"epsilon {epsilon} is below n/u_hat for n={n}, "
            f"u_hat=2**{u_hat_bits}; use an exact dictionary instead"
        )

    word_budget = int(overrides.get("word_budget", DEFAULT_WORD_BUDGET))
    if case_kind is CaseKind.DENSE:
        # n' * (rb + 2) dominates the exact pocket size b_eff + n' * (1 + rb)
        if bin_capacity * (k + 2) > word_budget * WORD_BITS:
            raise PocketOverWordError(
                f"pocket needs {bin_capacity * (k + 2)} bits but the budget is "
                f"{word_budget * WORD_BITS}; lower b_eff or raise word_budget"
            )

    params = FilterParams(
        n=n,
        epsilon=epsilon,
        epsilon_log2=k,
        u=u,
        b_prime=b_prime,
        bin_mean=bin_mean,
        delta=delta,
        b_eff=b_eff,
        m=m,
        bin_capacity=bin_capacity,
        spare_capacity=spare_capacity,
        remainder_bits=k,
        quotient_bits=max(1, math.ceil(math.log2(b_eff))) if b_eff > 1 else 0,
        bin_index_bits=max(1, math.ceil(math.log2(m))) if m > 1 else 0,
        case_kind=case_kind,
        u_hat_bits=u_hat_bits,
        b_min=b_min,
        c_dense=c_dense,
        word_budget=word_budget,
        word_bits=WORD_BITS,
        fixed_point_iterations=iterations,
    )
    assert params.m * params.b_eff >= n
    return params
