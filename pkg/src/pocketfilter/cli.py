"""Command-line harness.

Subcommands: oracle-check, fpr, spare-census, space-audit, bench.
Reports go to stdout (or --out) as JSON or CSV.  Exit status: 0 when
every gate passed, 1 on a gate failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from .harness import (
    StatsReport,
    WorkloadSpec,
    run_bench,
    run_fpr,
    run_oracle_check,
    run_space_audit,
    run_spare_census,
)


def parse_epsilon(text: str) -> float:
    """Accept '2^-6', '2**-6', '1/64', or a plain power-of-two float."""
    s = text.strip().replace(" ", "")
    try:
        if s.startswith(("2^", "2**")):
            exp = int(s.split("^")[-1].split("*")[-1])
            return 2.0**exp
        if "/" in s:
            num, den = s.split("/")
            return int(num) / int(den)
        return float(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"cannot parse epsilon {text!r}") from exc


def parse_mix(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix must be insert,delete,query")
    return parts[0], parts[1], parts[2]


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must be key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key, int(value)
    except ValueError:
        return key, value


def parse_grid(text: str) -> list[tuple[int, float]]:
    """Grid cells as 'n:k' pairs, e.g. '100000:4,100000:8'."""
    cells = []
    for part in text.split(","):
        n, k = part.split(":")
        cells.append((int(n), 2.0 ** -int(k)))
    return cells


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pocketfilter",
        description="dynamic filter validation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=100_000)
    common.add_argument(
        "--epsilon", type=parse_epsilon, default=2.0**-6,
        help="false-positive bound as 2^-k",
    )
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--ops", type=int, default=1_000_000)
    common.add_argument("--queries", type=int, default=1_000_000)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument(
        "--mode", choices=("dense", "sparse", "auto"), default="auto"
    )
    common.add_argument("--raw-bits", action="store_true")
    common.add_argument(
        "--keys", choices=("uniform", "adversarial"), default="uniform"
    )
    common.add_argument("--mix", type=parse_mix, default=(0.5, 0.2, 0.3))
    common.add_argument(
        "--reduction", choices=("locate", "carter"), default="locate"
    )
    common.add_argument("--subset-count", type=int, default=None)
    common.add_argument(
        "--override", type=parse_override, action="append", default=[],
        metavar="KEY=VALUE",
    )
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None)

    oc = sub.add_parser("oracle-check", parents=[common])
    oc.add_argument("--fault-inject", action="store_true")
    sub.add_parser("fpr", parents=[common])
    sub.add_parser("spare-census", parents=[common])
    sa = sub.add_parser("space-audit", parents=[common])
    sa.add_argument(
        "--grid", type=parse_grid, default=None,
        help="audit cells as n:k pairs, e.g. 100000:4,100000:8",
    )
    sub.add_parser("bench", parents=[common])
    return parser


def _spec_from_args(args) -> WorkloadSpec:
    overrides = dict(args.override)
    if args.mode != "auto":
        overrides["case"] = args.mode
    return WorkloadSpec(
        n=args.n,
        epsilon=args.epsilon,
        seed=args.seed,
        op_count=args.ops,
        mix=args.mix,
        key_distribution=args.keys,
        raw_bits=args.raw_bits or args.keys == "adversarial",
        trials=args.trials,
        reduction=args.reduction,
        overrides=overrides or None,
        subset_count=args.subset_count,
        fault_inject=getattr(args, "fault_inject", False),
    )


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            continue
        else:
            flat[name] = value
    return flat


def _to_csv(report: StatsReport) -> str:
    buf = io.StringIO()
    if report.kind == "space-audit":
        rows = report.details["rows"]
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    elif report.kind == "spare-census":
        rows = report.details["per_trial"]
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    else:
        doc = report.to_dict()
        doc.pop("details", None)
        flat = _flatten(doc)
        writer = csv.DictWriter(buf, fieldnames=list(flat.keys()))
        writer.writeheader()
        writer.writerow(flat)
    return buf.getvalue()


def _emit(report: StatsReport, fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    else:
        text = _to_csv(report)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.command == "oracle-check":
            report = run_oracle_check(spec, workers=args.workers)
        elif args.command == "fpr":
            report = run_fpr(spec, args.queries, workers=args.workers)
        elif args.command == "spare-census":
            report = run_spare_census(spec, workers=args.workers)
        elif args.command == "space-audit":
            grid = args.grid or [(args.n, args.epsilon)]
            report = run_space_audit(grid, overrides=spec.overrides, seed=args.seed)
        elif args.command == "bench":
            report = run_bench(spec)
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    _emit(report, args.format, args.out)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
