"""Dynamic approximate-membership filter with constant-word bin storage.

The public entry point is :class:`DynamicFilter`; the lower layers
(parameter derivation, hash plans, pocket bins, spare, reduced-key
dictionary, sparse retrieval) are exported for the harness and for
direct experimentation.
"""

from .errors import (
    AtCapacityError,
    CapacityTooSmallError,
    FilterError,
    FilterOverflowError,
    InvalidEpsilonError,
    NotFoundError,
    OutOfUniverseError,
    PocketOverWordError,
)
from .filter import DynamicFilter, FilterStats
from .harness import (
    StatsReport,
    WorkloadSpec,
    run_bench,
    run_fpr,
    run_oracle_check,
    run_space_audit,
    run_spare_census,
    wilson_interval,
)
from .hashing import (
    FeistelPermutation,
    HashPlan,
    KWiseHash,
    PairwiseHash,
    build_plan,
    carter_key,
    invert_permute,
    locate,
    permute,
    plan_from_json,
    plan_to_json,
    reduced_key,
)
from .params import CaseKind, FilterParams, derive_params, select_case
from .pocket import AccessMeter, PocketDictionary
from .retrieval import RetrievalStore
from .rmsdict import RmsDictionary
from .spare import SpareStore

__version__ = "0.1.0"

__all__ = [
    "AccessMeter",
    "AtCapacityError",
    "CapacityTooSmallError",
    "CaseKind",
    "DynamicFilter",
    "FeistelPermutation",
    "FilterError",
    "FilterOverflowError",
    "FilterParams",
    "FilterStats",
    "HashPlan",
    "InvalidEpsilonError",
    "KWiseHash",
    "NotFoundError",
    "OutOfUniverseError",
    "PairwiseHash",
    "PocketDictionary",
    "PocketOverWordError",
    "RetrievalStore",
    "RmsDictionary",
    "SpareStore",
    "StatsReport",
    "WorkloadSpec",
    "build_plan",
    "carter_key",
    "derive_params",
    "invert_permute",
    "locate",
    "permute",
    "plan_from_json",
    "plan_to_json",
    "reduced_key",
    "run_bench",
    "run_fpr",
    "run_oracle_check",
    "run_space_audit",
    "run_spare_census",
    "select_case",
    "wilson_interval",
]
