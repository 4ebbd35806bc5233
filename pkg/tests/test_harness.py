import json

import pytest
from statsmodels.stats.proportion import proportion_confint

from pocketfilter import (
    WorkloadSpec,
    run_bench,
    run_fpr,
    run_oracle_check,
    run_space_audit,
    run_spare_census,
    wilson_interval,
)
from pocketfilter.cli import main, parse_epsilon


def small_spec(**kw):
    defaults = dict(
        n=2**12,
        epsilon=2.0**-4,
        seed=3,
        op_count=20_000,
        trials=2,
        overrides={"spare_capacity": 64},
    )
    defaults.update(kw)
    return WorkloadSpec(**defaults)


def test_workload_spec_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(mix=(0.5, 0.5, 0.5)).validate()
    with pytest.raises(ValueError):
        WorkloadSpec(key_distribution="adversarial").validate()
    with pytest.raises(ValueError):
        WorkloadSpec(key_distribution="weird", raw_bits=True).validate()
    WorkloadSpec(key_distribution="adversarial", raw_bits=True).validate()


def test_wilson_matches_statsmodels():
    for successes, total in [(3, 100), (0, 50), (1560, 100_000), (1, 7)]:
        low, high = wilson_interval(successes, total)
        ref_low, ref_high = proportion_confint(
            successes, total, alpha=0.05, method="wilson"
        )
        assert low == pytest.approx(ref_low, abs=1e-9)
        assert high == pytest.approx(ref_high, abs=1e-9)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_oracle_check_uniform_passes():
    report = run_oracle_check(small_spec(), workers=1)
    assert report.passed
    assert report.details["false_negatives"] == 0
    assert report.details["mismatches"] == 0
    assert report.details["counterexample"] is None


def test_oracle_check_adversarial_raw_passes():
    spec = small_spec(
        n=2**12,
        raw_bits=True,
        key_distribution="adversarial",
        mix=(0.45, 0.35, 0.2),
        op_count=30_000,
        trials=2,
    )
    report = run_oracle_check(spec, workers=1)
    assert report.passed
    assert report.details["false_negatives"] == 0
    assert report.spare_peak > 0  # hot bins must actually spill


def test_oracle_check_parallel_matches_serial():
    spec = small_spec(trials=3, op_count=8_000)
    serial = run_oracle_check(spec, workers=1)
    parallel = run_oracle_check(spec, workers=2)
    assert serial.to_dict() == parallel.to_dict()


def test_fault_injection_is_caught():
    report = run_oracle_check(small_spec(fault_inject=True, trials=1), workers=1)
    assert not report.passed
    ce = report.details["counterexample"]
    assert ce is not None
    assert ce["op_index"] >= 10_000  # corruption lands mid-run
    assert ce["recent_ops"]


def test_fault_injection_caught_in_sparse_mode():
    spec = small_spec(
        epsilon=2.0**-24, fault_inject=True, trials=1, overrides=None
    )
    report = run_oracle_check(spec, workers=1)
    assert not report.passed


def test_fpr_report_fields_and_gate():
    spec = small_spec(trials=1)
    report = run_fpr(spec, negative_queries=20_000, workers=1)
    assert report.passed
    assert report.empirical_fpr <= 1.2 * spec.epsilon
    assert report.wilson_low <= report.empirical_fpr <= report.wilson_high
    assert report.bits_used > 0
    assert report.info_lower_bound == spec.n * 4
    assert report.details["positives"] >= 0


def test_fpr_reproducible_across_worker_counts():
    spec = small_spec(trials=1, n=2**10, op_count=0)
    one = run_fpr(spec, negative_queries=10_000, workers=1)
    two = run_fpr(spec, negative_queries=10_000, workers=2)
    assert one.to_dict() == two.to_dict()


def test_empty_filter_fpr_is_zero():
    spec = WorkloadSpec(n=2**10, epsilon=0.5, seed=1, op_count=0)
    # zero members: every query is a confirmed non-member
    report = run_fpr(
        WorkloadSpec(n=2**10, epsilon=0.5, seed=1, op_count=0, trials=1),
        negative_queries=0,
    )
    assert report.empirical_fpr == 0.0


def test_spare_census_shape():
    spec = small_spec(trials=3)
    report = run_spare_census(spec, workers=1)
    assert report.kind == "spare-census"
    assert report.details["trials_spare_below_capacity"] == 3
    assert len(report.details["per_trial"]) == 3
    assert 0 <= report.full_bin_rate <= 1
    assert report.gamma > 0
    assert report.passed


def test_census_giant_bin_never_spills():
    # one bin the size of the whole set: nothing can overflow
    n = 2**10
    spec = WorkloadSpec(
        n=n,
        epsilon=2.0**-2,
        seed=2,
        trials=1,
        overrides={
            "b_eff": n,
            "bin_capacity": n,
            "word_budget": 1 + (n + n + n * 2) // 64,
        },
    )
    report = run_spare_census(spec, workers=1)
    assert report.spare_peak == 0


def test_space_audit_identities():
    report = run_space_audit([(100_000, 2.0**-6), (100_000, 2.0**-8)])
    rows = report.details["rows"]
    for row in rows:
        assert row["pocket_bits"] + row["spare_bits"] + row["plan_bits"] == row["bits_used"]
        assert row["bits_per_element"] == row["bits_used"] / row["n"]
        assert row["spare_fraction"] < 0.05
        assert row["overhead_ratio"] == row["bits_per_element"] / row["k"]
    assert report.passed


def test_bench_empty_and_small():
    empty = run_bench(WorkloadSpec(n=2**10, epsilon=0.5, op_count=0, trials=1))
    assert empty.passed
    assert empty.op_latency_percentiles == {}
    report = run_bench(small_spec(op_count=5_000, trials=1))
    assert report.passed
    assert report.details["max_words_per_op"] <= 4
    assert report.details["word_budget_violations"] == 0
    assert "insert" in report.op_latency_percentiles


def test_reports_reproducible():
    spec = small_spec(trials=2, op_count=5_000)
    a = run_oracle_check(spec, workers=1).to_dict()
    b = run_oracle_check(spec, workers=1).to_dict()
    assert a == b


# --- CLI ---------------------------------------------------------------


def test_parse_epsilon_forms():
    assert parse_epsilon("2^-6") == 2.0**-6
    assert parse_epsilon("2**-6") == 2.0**-6
    assert parse_epsilon("1/64") == 2.0**-6
    assert parse_epsilon("0.25") == 0.25


def test_cli_fpr_json(capsys):
    code = main(
        [
            "fpr",
            "--n", "4096",
            "--epsilon", "2^-4",
            "--seed", "3",
            "--queries", "20000",
            "--override", "spare_capacity=64",
            "--workers", "1",
        ]
    )
    out = capsys.readouterr().out
    doc = json.loads(out)
    assert code == 0
    assert doc["kind"] == "fpr"
    assert doc["passed"] is True
    assert doc["schema_version"] == 1


def test_cli_gate_failure_exit_code(capsys):
    code = main(
        [
            "oracle-check",
            "--n", "4096",
            "--epsilon", "2^-4",
            "--ops", "20000",
            "--trials", "1",
            "--override", "spare_capacity=64",
            "--fault-inject",
            "--workers", "1",
        ]
    )
    capsys.readouterr()
    assert code == 1


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["fpr", "--epsilon", "nonsense"])
    assert exc.value.code == 2


def test_cli_invalid_epsilon_value_is_usage_error(capsys):
    code = main(["fpr", "--n", "4096", "--epsilon", "0.3", "--queries", "10"])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_cli_space_audit_csv(tmp_path):
    out = tmp_path / "audit.csv"
    code = main(
        [
            "space-audit",
            "--grid", "100000:6,100000:8",
            "--format", "csv",
            "--out", str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("n,")
    assert len(lines) == 3


def test_cli_census_csv(capsys):
    code = main(
        [
            "spare-census",
            "--n", "4096",
            "--epsilon", "2^-4",
            "--trials", "2",
            "--override", "spare_capacity=64",
            "--format", "csv",
            "--workers", "1",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.splitlines()[0].startswith("trial,")


def test_cli_mode_flag_forces_case(capsys):
    code = main(
        [
            "bench",
            "--n", "4096",
            "--epsilon", "2^-4",
            "--mode", "sparse",
            "--ops", "2000",
        ]
    )
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert out["details"]["pocket_ops_metered"] == 0
