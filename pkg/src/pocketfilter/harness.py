"""Workload generation, oracle checking, and measurement runners.

The oracle used for equivalence checks is deliberately naive: a dict
from reduced key to multiplicity.  It shares nothing with the filter
except the hash plan (both must agree on how a key is reduced), so any
divergence in answers points at the structures, not the comparison.

Trials are embarrassingly parallel: each one owns a filter built from a
seed derived only from (spec.seed, trial index), so results are
reproducible regardless of worker count.
"""

from __future__ import annotations

import math
import os
import random
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from .errors import AtCapacityError, FilterOverflowError, NotFoundError
from .filter import DynamicFilter
from .hashing import carter_key_batch, reduced_key_batch
from .params import CaseKind, derive_params
from .pocket import AccessMeter
from .rmsdict import RmsDictionary

SCHEMA_VERSION = 1
FPR_GATE_FACTOR = 1.2
FPR_CI_GATE_FACTOR = 1.3
FPR_SHARDS = 8
COUNTEREXAMPLE_WINDOW = 32

_OP_NAMES = ("insert", "delete", "query")


@dataclass(frozen=True)
class WorkloadSpec:
    n: int = 100_000
    epsilon: float = 2.0**-6
    seed: int = 0
    op_count: int = 1_000_000
    mix: tuple[float, float, float] = (0.5, 0.2, 0.3)
    key_distribution: str = "uniform"      # "uniform" | "adversarial"
    raw_bits: bool = False
    trials: int = 1
    reduction: str = "locate"
    overrides: dict | None = None
    subset_count: int | None = None
    fault_inject: bool = False

    def validate(self) -> None:
        if abs(sum(self.mix) - 1.0) > 1e-9:
            raise ValueError(f"mix ratios must sum to 1, got {self.mix}")
        if any(p < 0 for p in self.mix):
            raise ValueError("mix ratios must be nonnegative")
        if self.key_distribution not in ("uniform", "adversarial"):
            raise ValueError(f"unknown key distribution {self.key_distribution}")
        if self.key_distribution == "adversarial" and not self.raw_bits:
            raise ValueError(
                "adversarial keys require raw_bits mode (collisions cannot "
                "be constructed against seeded hashes)"
            )
        if self.trials < 1 or self.op_count < 0:
            raise ValueError("trials must be >= 1 and op_count >= 0")


@dataclass
class StatsReport:
    kind: str
    n: int
    epsilon: float
    seed: int
    passed: bool
    schema_version: int = SCHEMA_VERSION
    empirical_fpr: float | None = None
    fpr_bound: float | None = None
    wilson_low: float | None = None
    wilson_high: float | None = None
    bits_used: int | None = None
    bits_per_element: float | None = None
    info_lower_bound: int | None = None
    spare_peak: int | None = None
    spare_peak_fraction: float | None = None
    full_bin_rate: float | None = None
    gamma: float | None = None
    overflow_events: int = 0
    op_latency_percentiles: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# exact 97.5% normal quantile, so intervals match standard tables
Z_95 = 1.959963984540054


def wilson_interval(
    successes: int, total: int, z: float = Z_95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total == 0:
        return 0.0, 1.0
    phat = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (phat + z2 / (2 * total)) / denom
    half = z * math.sqrt(
        phat * (1 - phat) / total + z2 / (4 * total * total)
    ) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _trial_seed(seed: int, trial: int) -> int:
    return seed * (1 << 20) + trial


def _gamma(params) -> float:
    return math.exp(-params.delta**2 * params.b_eff / 3.0)


def _worker_count(trials: int, workers: int | None) -> int:
    cpu = os.cpu_count() or 1
    return max(1, min(trials, workers if workers is not None else cpu))


def _pool_map(fn, args_list: Sequence, workers: int) -> list:
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args_list)))


# --- oracle equivalence -------------------------------------------------

def _corrupt(flt_or_rms, live_y) -> None:
    """Fault injection: garble one header bit (dense) or stored
    fingerprint bits (sparse) so the checker has something to catch."""
    if isinstance(flt_or_rms, RmsDictionary):
        rms = flt_or_rms
    elif flt_or_rms.rms is not None:
        rms = flt_or_rms.rms
    else:
        # flip several live fingerprints; a single one could be deleted
        # (and its slot recycled) before any query looks at it
        retrieval = flt_or_rms.retrieval
        flipped = 0
        for pos, r in enumerate(retrieval._rems):
            if r >= 0:
                retrieval.slot_array[retrieval._slots[pos]] ^= 1
                flipped += 1
                if flipped == 8:
                    return
        return
    target = max(rms.bins, key=lambda p: p.occupancy)
    target.header ^= 1


def _draw_codes(rng: random.Random, mix, count: int) -> list[int]:
    return rng.choices((0, 1, 2), weights=mix, k=count)


def _run_oracle_trial(spec: WorkloadSpec, trial: int) -> dict:
    rng = random.Random(_trial_seed(spec.seed, trial))
    count = spec.op_count
    codes = _draw_codes(rng, spec.mix, count)

    if spec.raw_bits:
        return _replay_raw(spec, trial, rng, codes)
    return _replay_filter(spec, trial, rng, codes)


def _replay_filter(spec: WorkloadSpec, trial: int, rng, codes) -> dict:
    flt = DynamicFilter(
        spec.n,
        spec.epsilon,
        seed=rng.getrandbits(64),
        overrides=spec.overrides,
        reduction=spec.reduction,
        subset_count=spec.subset_count,
    )
    count = len(codes)
    bits = flt.params.u_hat_bits
    key_rng = np.random.Generator(np.random.PCG64(rng.getrandbits(64)))
    arr = key_rng.integers(0, 1 << bits, size=count, dtype=np.uint64)
    fresh = arr.tolist()
    if flt.mode is CaseKind.DENSE:
        batch = (
            reduced_key_batch(flt.plan, arr)
            if spec.reduction == "locate"
            else carter_key_batch(flt.plan, arr)
        )
        reduced = batch.tolist()
    else:
        reduced = fresh  # sparse oracle keys the raw key itself

    live_x: list[int] = []
    live_y: list[int] = []
    oracle: dict[int, int] = {}
    window: deque = deque(maxlen=COUNTEREXAMPLE_WINDOW)
    fn = mismatches = overflow = 0
    counterexample = None
    fresh_i = 0
    cap = spec.n
    fault_at = count // 2 if spec.fault_inject else -1
    rng_random = rng.random
    rng_randrange = rng.randrange

    for i, code in enumerate(codes):
        if i == fault_at:
            _corrupt(flt, live_y)
        live_len = len(live_x)
        if code == 0 and live_len == cap:
            code = 1
        elif code == 1 and live_len == 0:
            code = 0
        if code == 0:
            x = fresh[fresh_i]
            y = reduced[fresh_i]
            fresh_i += 1
            try:
                flt.insert(x)
            except FilterOverflowError:
                overflow += 1
                continue
            except AtCapacityError:
                # only reachable once fault injection has desynced the
                # structure's live count; the mismatch is already logged
                continue
            live_x.append(x)
            live_y.append(y)
            oracle[y] = oracle.get(y, 0) + 1
            op = ("insert", x)
        elif code == 1:
            j = rng_randrange(live_len)
            x = live_x[j]
            y = live_y[j]
            live_x[j] = live_x[-1]
            live_y[j] = live_y[-1]
            live_x.pop()
            live_y.pop()
            op = ("delete", x)
            try:
                flt.delete(x)
            except NotFoundError:
                mismatches += 1
                if counterexample is None:
                    counterexample = _counterexample(
                        trial, i, op, True, False, window
                    )
            c = oracle[y] - 1
            if c:
                oracle[y] = c
            else:
                del oracle[y]
        else:
            if live_len and rng_random() < 0.5:
                x = live_x[rng_randrange(live_len)]
                expected = True
            else:
                x = fresh[fresh_i]
                expected = reduced[fresh_i] in oracle
                fresh_i += 1
            op = ("query", x)
            got = flt.query(x)
            if got != expected:
                mismatches += 1
                if expected and not got:
                    fn += 1
                if counterexample is None:
                    counterexample = _counterexample(
                        trial, i, op, expected, got, window
                    )
        window.append(op)

    st = flt.stats()
    return {
        "trial": trial,
        "ok": mismatches == 0,
        "false_negatives": fn,
        "mismatches": mismatches,
        "overflow_events": overflow,
        "ops": len(codes),
        "spare_peak": st.dense.spare_peak if st.dense else 0,
        "counterexample": counterexample,
    }


def _replay_raw(spec: WorkloadSpec, trial: int, rng, codes) -> dict:
    """Drive the reduced-key dictionary directly (the random-multiset
    model); adversarial mode funnels keys into two hot bins."""
    params = derive_params(spec.n, spec.epsilon, spec.overrides)
    rms = RmsDictionary(params, rng.getrandbits(64))
    universe = rms.universe
    adversarial = spec.key_distribution == "adversarial"
    if adversarial:
        hot = (0, params.m // 2) if params.m > 1 else (0,)
        cap = len(hot) * params.bin_capacity + params.spare_capacity - 2
        cap = min(cap, params.n)
    else:
        cap = params.n

    count = len(codes)
    rb = params.remainder_bits
    b_eff = params.b_eff
    fresh = []
    for _ in range(count):
        if adversarial and rng.random() < 0.8:
            b = hot[rng.randrange(len(hot))]
            fresh.append(
                ((b * b_eff + rng.randrange(b_eff)) << rb)
                | rng.getrandbits(rb)
            )
        else:
            fresh.append(rng.randrange(universe))

    live: list[int] = []
    oracle: dict[int, int] = {}
    window: deque = deque(maxlen=COUNTEREXAMPLE_WINDOW)
    fn = mismatches = overflow = 0
    counterexample = None
    fresh_i = 0
    fault_at = count // 2 if spec.fault_inject else -1

    for i, code in enumerate(codes):
        if i == fault_at:
            _corrupt(rms, live)
        live_len = len(live)
        if code == 0 and live_len == cap:
            code = 1
        elif code == 1 and live_len == 0:
            code = 0
        if code == 0:
            y = fresh[fresh_i]
            fresh_i += 1
            try:
                rms.insert(y)
            except FilterOverflowError:
                overflow += 1
                continue
            live.append(y)
            oracle[y] = oracle.get(y, 0) + 1
            op = ("insert", y)
        elif code == 1:
            j = rng.randrange(live_len)
            y = live[j]
            live[j] = live[-1]
            live.pop()
            op = ("delete", y)
            try:
                rms.delete(y)
            except NotFoundError:
                mismatches += 1
                if counterexample is None:
                    counterexample = _counterexample(
                        trial, i, op, True, False, window
                    )
            c = oracle[y] - 1
            if c:
                oracle[y] = c
            else:
                del oracle[y]
        else:
            if live_len and rng.random() < 0.5:
                y = live[rng.randrange(live_len)]
            else:
                y = fresh[fresh_i]
                fresh_i += 1
            op = ("query", y)
            expected = oracle.get(y, 0)
            got = rms.multiplicity(y)
            if got != expected:
                mismatches += 1
                if expected and not got:
                    fn += 1
                if counterexample is None:
                    counterexample = _counterexample(
                        trial, i, op, expected, got, window
                    )
        window.append(op)

    return {
        "trial": trial,
        "ok": mismatches == 0,
        "false_negatives": fn,
        "mismatches": mismatches,
        "overflow_events": overflow,
        "ops": len(codes),
        "spare_peak": rms.spare_peak,
        "counterexample": counterexample,
    }


def _counterexample(trial, index, op, expected, got, window) -> dict:
    return {
        "trial": trial,
        "op_index": index,
        "op": {"kind": op[0], "key": op[1]},
        "expected": expected,
        "got": got,
        "recent_ops": [{"kind": k, "key": x} for k, x in window],
    }


def run_oracle_check(
    spec: WorkloadSpec, workers: int | None = None
) -> StatsReport:
    """Replay trials against the naive multiset oracle; pass means zero
    false negatives and exact answer agreement."""
    spec.validate()
    results = _pool_map(
        _run_oracle_trial,
        [(spec, t) for t in range(spec.trials)],
        _worker_count(spec.trials, workers),
    )
    fn = sum(r["false_negatives"] for r in results)
    mismatches = sum(r["mismatches"] for r in results)
    overflow = sum(r["overflow_events"] for r in results)
    counterexample = next(
        (r["counterexample"] for r in results if r["counterexample"]), None
    )
    params = derive_params(spec.n, spec.epsilon, spec.overrides)
    return StatsReport(
        kind="oracle-check",
        n=spec.n,
        epsilon=spec.epsilon,
        seed=spec.seed,
        passed=all(r["ok"] for r in results),
        overflow_events=overflow,
        spare_peak=max(r["spare_peak"] for r in results),
        gamma=_gamma(params),
        details={
            "trials": spec.trials,
            "ops_per_trial": spec.op_count,
            "false_negatives": fn,
            "mismatches": mismatches,
            "key_distribution": spec.key_distribution,
            "raw_bits": spec.raw_bits,
            "counterexample": counterexample,
        },
    )


# --- false positive rate ------------------------------------------------

_FPR_STATE: dict = {}


def _fpr_build(spec: WorkloadSpec) -> tuple[DynamicFilter, set[int]]:
    rng = random.Random(_trial_seed(spec.seed, 0))
    flt = DynamicFilter(
        spec.n,
        spec.epsilon,
        seed=rng.getrandbits(64),
        overrides=spec.overrides,
        reduction=spec.reduction,
        subset_count=spec.subset_count,
    )
    bits = flt.params.u_hat_bits
    members: set[int] = set()
    while len(members) < spec.n:
        x = rng.getrandbits(bits)
        if x not in members:
            members.add(x)
            flt.insert(x)
    return flt, members


def _fpr_init(spec: WorkloadSpec) -> None:
    _FPR_STATE["built"] = _fpr_build(spec)
    _FPR_STATE["spec"] = spec


def _fpr_shard(shard: int, queries: int) -> int:
    spec = _FPR_STATE["spec"]
    flt, members = _FPR_STATE["built"]
    rng = random.Random(_trial_seed(spec.seed, 1 + shard))
    bits = flt.params.u_hat_bits
    getrandbits = rng.getrandbits
    query = flt.query
    positives = 0
    for _ in range(queries):
        x = getrandbits(bits)
        while x in members:
            x = getrandbits(bits)
        if query(x):
            positives += 1
    return positives


def run_fpr(
    spec: WorkloadSpec, negative_queries: int, workers: int | None = None
) -> StatsReport:
    """Fill to capacity, then measure the positive rate on confirmed
    non-members.  Queries are split over a fixed number of shards so the
    result does not depend on the worker count."""
    spec.validate()
    derive_params(spec.n, spec.epsilon, spec.overrides)  # fail fast, in-process
    shards = [negative_queries // FPR_SHARDS] * FPR_SHARDS
    shards[0] += negative_queries - sum(shards)
    nworkers = _worker_count(FPR_SHARDS, workers)
    if nworkers <= 1:
        _fpr_init(spec)
        positives = sum(_fpr_shard(s, q) for s, q in enumerate(shards))
        flt, _ = _FPR_STATE["built"]
    else:
        with ProcessPoolExecutor(
            max_workers=nworkers, initializer=_fpr_init, initargs=(spec,)
        ) as pool:
            positives = sum(pool.map(_fpr_shard, range(FPR_SHARDS), shards))
        flt, _ = _fpr_build(spec)

    fpr = positives / negative_queries if negative_queries else 0.0
    low, high = wilson_interval(positives, negative_queries)
    st = flt.stats()
    params = flt.params
    k = params.epsilon_log2
    passed = (
        fpr <= FPR_GATE_FACTOR * spec.epsilon
        and high <= FPR_CI_GATE_FACTOR * spec.epsilon
    )
    return StatsReport(
        kind="fpr",
        n=spec.n,
        epsilon=spec.epsilon,
        seed=spec.seed,
        passed=passed,
        empirical_fpr=fpr,
        fpr_bound=spec.epsilon,
        wilson_low=low,
        wilson_high=high,
        bits_used=st.bits_used,
        bits_per_element=st.bits_used / spec.n,
        info_lower_bound=spec.n * k,
        spare_peak=st.dense.spare_peak if st.dense else None,
        spare_peak_fraction=(
            st.dense.spare_peak / spec.n if st.dense else None
        ),
        gamma=_gamma(params) if st.dense else None,
        details={
            "negative_queries": negative_queries,
            "positives": positives,
            "mode": st.mode,
            "gate_factor": FPR_GATE_FACTOR,
            "ci_gate_factor": FPR_CI_GATE_FACTOR,
        },
    )


# --- spare occupancy census ----------------------------------------------

def _run_census_trial(spec: WorkloadSpec, trial: int) -> dict:
    rng = random.Random(_trial_seed(spec.seed, trial))
    flt = DynamicFilter(
        spec.n,
        spec.epsilon,
        seed=rng.getrandbits(64),
        overrides=spec.overrides,
        reduction=spec.reduction,
        subset_count=spec.subset_count,
    )
    if flt.mode is not CaseKind.DENSE:
        raise ValueError("spare census requires dense mode")
    bits = flt.params.u_hat_bits
    overflow = 0
    insert = flt.insert
    getrandbits = rng.getrandbits
    for _ in range(spec.n):
        try:
            insert(getrandbits(bits))
        except FilterOverflowError:
            overflow += 1
    st = flt.rms.stats()
    m = flt.params.m
    return {
        "trial": trial,
        "spare_peak": st.spare_peak,
        "spare_end": st.spare_live,
        "full_bins": st.full_bins,
        "full_bin_rate": st.full_bins / m,
        "overflow_events": overflow,
    }


def run_spare_census(
    spec: WorkloadSpec, workers: int | None = None
) -> StatsReport:
    """Fill n random keys per trial and record peak spare occupancy and
    the fraction of full bins, against capacity n_s and the e^(-d^2*B/3)
    bound."""
    spec.validate()
    params = derive_params(spec.n, spec.epsilon, spec.overrides)
    results = _pool_map(
        _run_census_trial,
        [(spec, t) for t in range(spec.trials)],
        _worker_count(spec.trials, workers),
    )
    gamma = _gamma(params)
    n_s = params.spare_capacity
    spare_ok = sum(r["spare_peak"] < n_s for r in results)
    gamma_ok = sum(r["full_bin_rate"] <= gamma for r in results)
    peak = max(r["spare_peak"] for r in results)
    overflow = sum(r["overflow_events"] for r in results)
    binom_tail = float(
        scipy_stats.binom.sf(params.bin_capacity - 1, spec.n, 1.0 / params.m)
    )
    return StatsReport(
        kind="spare-census",
        n=spec.n,
        epsilon=spec.epsilon,
        seed=spec.seed,
        passed=spare_ok == spec.trials and overflow == 0,
        spare_peak=peak,
        spare_peak_fraction=peak / spec.n,
        full_bin_rate=max(r["full_bin_rate"] for r in results),
        gamma=gamma,
        overflow_events=overflow,
        details={
            "trials": spec.trials,
            "spare_capacity": n_s,
            "trials_spare_below_capacity": spare_ok,
            "trials_full_rate_le_gamma": gamma_ok,
            "mean_spare_peak": sum(r["spare_peak"] for r in results)
            / len(results),
            "binomial_full_bin_tail": binom_tail,
            "per_trial": results,
        },
    )


# --- space audit ----------------------------------------------------------

def run_space_audit(
    grid: Sequence[tuple[int, float]],
    overrides: dict | None = None,
    seed: int = 0,
) -> StatsReport:
    """Closed-form space accounting per (n, epsilon) cell, measured off a
    constructed filter (allocation does not depend on occupancy)."""
    rows = []
    all_ok = True
    for n, epsilon in grid:
        flt = DynamicFilter(n, epsilon, seed=seed, overrides=overrides)
        st = flt.stats()
        p = flt.params
        k = p.epsilon_log2
        bpe = st.bits_used / n
        pocket_total = p.m * p.pocket_bits
        spare_bits = flt.rms.spare.bits_used if flt.rms else 0
        bound = (1.0 + p.delta) * k + 10.0
        ok = bpe <= bound
        all_ok = all_ok and ok
        rows.append(
            {
                "n": n,
                "epsilon": epsilon,
                "k": k,
                "mode": st.mode,
                "bits_used": st.bits_used,
                "pocket_bits": pocket_total if flt.rms else None,
                "spare_bits": spare_bits if flt.rms else None,
                "plan_bits": st.plan_bits,
                "bits_per_element": bpe,
                "info_lower_bound": n * k,
                "overhead_ratio": bpe / k,
                "delta": p.delta,
                "bound_bits_per_element": bound,
                "additive_overhead": bpe - (1.0 + p.delta) * k,
                "spare_fraction": spare_bits / st.bits_used if flt.rms else None,
                "passed": ok,
            }
        )
    first_n, first_eps = grid[0]
    return StatsReport(
        kind="space-audit",
        n=first_n,
        epsilon=first_eps,
        seed=seed,
        passed=all_ok,
        details={"rows": rows},
    )


# --- latency / word-access bench ------------------------------------------

def run_bench(spec: WorkloadSpec) -> StatsReport:
    """Mixed-op run with per-op latency and pocket word-access metering."""
    spec.validate()
    params = derive_params(spec.n, spec.epsilon, spec.overrides)
    meter = AccessMeter(budget=params.word_budget)
    rng = random.Random(_trial_seed(spec.seed, 0))
    flt = DynamicFilter(
        spec.n,
        spec.epsilon,
        seed=rng.getrandbits(64),
        overrides=spec.overrides,
        reduction=spec.reduction,
        subset_count=spec.subset_count,
        meter=meter,
    )
    count = spec.op_count
    codes = _draw_codes(rng, spec.mix, count)
    bits = flt.params.u_hat_bits
    fresh = [rng.getrandbits(bits) for _ in range(count)]

    lat: dict[int, list[int]] = {0: [], 1: [], 2: []}
    live: list[int] = []
    overflow = 0
    fresh_i = 0
    timer = time.perf_counter_ns
    for code in codes:
        live_len = len(live)
        if code == 0 and live_len == spec.n:
            code = 1
        elif code == 1 and live_len == 0:
            code = 0
        if code == 0:
            x = fresh[fresh_i]
            fresh_i += 1
            t0 = timer()
            try:
                flt.insert(x)
            except FilterOverflowError:
                overflow += 1
                continue
            lat[0].append(timer() - t0)
            live.append(x)
        elif code == 1:
            j = rng.randrange(live_len)
            x = live[j]
            live[j] = live[-1]
            live.pop()
            t0 = timer()
            flt.delete(x)
            lat[1].append(timer() - t0)
        else:
            if live_len and rng.random() < 0.5:
                x = live[rng.randrange(live_len)]
            else:
                x = fresh[fresh_i]
                fresh_i += 1
            t0 = timer()
            flt.query(x)
            lat[2].append(timer() - t0)

    percentiles = {}
    for code, name in enumerate(_OP_NAMES):
        samples = lat[code]
        if samples:
            arr = np.asarray(samples, dtype=np.float64) / 1000.0
            percentiles[name] = {
                "count": len(samples),
                "p50_us": float(np.percentile(arr, 50)),
                "p99_us": float(np.percentile(arr, 99)),
                "p999_us": float(np.percentile(arr, 99.9)),
            }
    word_ok = meter.violations == 0 and meter.max_words <= params.word_budget
    return StatsReport(
        kind="bench",
        n=spec.n,
        epsilon=spec.epsilon,
        seed=spec.seed,
        passed=word_ok and overflow == 0,
        overflow_events=overflow,
        op_latency_percentiles=percentiles,
        details={
            "ops": count,
            "word_budget": params.word_budget,
            "pocket_ops_metered": meter.ops,
            "max_words_per_op": meter.max_words,
            "word_budget_violations": meter.violations,
        },
    )
