"""Command-line entry point.

Subcommands:

* run          execute a sweep from a YAML config
* gen-data     write one synthetic draw as a CSV
* summarize    recompute the per-cell summary from a raw CSV
* convergence  coverage-gap stabilization report from a summary CSV
* outliers     IQR outlier report from a raw CSV

Exit codes: 0 success, 1 hard failure (including failed repetitions),
2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .data import NoiseKind, SyntheticSpec
from .runner import (
    CONVERGENCE_COLUMNS,
    OUTLIER_COLUMNS,
    SUMMARY_COLUMNS,
    ConfigError,
    _fmt,
    _summary_row,
    convergence_rows,
    load_config,
    read_raw_csv,
    read_summary_csv,
    run_sweep,
    summarize_records,
    summary_from_row,
    write_synthetic_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cplab",
        description="Split conformal prediction benchmark sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a sweep from a YAML config")
    run.add_argument("--config", required=True, help="path to the sweep YAML")
    run.add_argument("--output-dir", help="override the config output_dir")
    run.add_argument("--workers", type=int, help="override worker count")
    run.add_argument("--repetitions", type=int, help="override repetition count")
    run.add_argument("--base-seed", type=int, help="override the base seed")
    run.add_argument("--no-resume", action="store_true",
                     help="ignore rows already present in raw.csv")
    run.add_argument("--quiet", action="store_true", help="suppress progress lines")

    gen = sub.add_parser("gen-data", help="write one synthetic draw as CSV")
    gen.add_argument("--noise", required=True,
                     choices=[k.value for k in NoiseKind])
    gen.add_argument("--d", type=int, default=1)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--noise-level", type=float, default=0.3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    summ = sub.add_parser("summarize", help="recompute summaries from raw.csv")
    summ.add_argument("--raw", required=True)
    summ.add_argument("--out", required=True)

    conv = sub.add_parser("convergence", help="coverage-gap stabilization report")
    conv.add_argument("--summary", required=True)
    conv.add_argument("--out", help="write CSV here instead of stdout")

    outl = sub.add_parser("outliers", help="IQR outlier report from raw.csv")
    outl.add_argument("--raw", required=True)
    outl.add_argument("--out", help="write CSV here instead of stdout")
    return parser


def _cmd_run(args) -> int:
    overrides = {
        "output_dir": args.output_dir,
        "workers": args.workers,
        "repetitions": args.repetitions,
        "base_seed": args.base_seed,
    }
    if args.no_resume:
        overrides["resume"] = False
    cfg = load_config(args.config, overrides)
    table = run_sweep(cfg, progress=not args.quiet)
    print(f"run {table.run_id}: {len(table.records)} rows, "
          f"{len(table.summaries)} cells, {len(table.failures)} failures "
          f"-> {cfg.output_dir}")
    return 1 if table.failures else 0


def _cmd_gen_data(args) -> int:
    try:
        spec = SyntheticSpec(args.d, args.n, NoiseKind(args.noise),
                             args.noise_level, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc))
    write_synthetic_csv(spec, args.out)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def _open_out(path: str | None):
    if path:
        return open(path, "w", newline="")
    return sys.stdout


def _cmd_summarize(args) -> int:
    entries, failures = read_raw_csv(args.raw)
    run_id = entries[0][2] if entries else ""
    summaries = summarize_records([rec for rec, _, _ in entries])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(_summary_row(run_id, s) for s in summaries)
    skipped = f", {len(failures)} failed rows skipped" if failures else ""
    print(f"wrote {len(summaries)} cell summaries to {args.out}{skipped}")
    return 0


def _cmd_convergence(args) -> int:
    summaries = [summary_from_row(r) for r in read_summary_csv(args.summary)]
    rows = convergence_rows(summaries)
    out = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(CONVERGENCE_COLUMNS)
        for c in rows:
            writer.writerow([
                "", c.ncm, c.model, c.dataset, c.noise, c.d, _fmt(c.epsilon),
                ";".join(str(v) for v in c.sizes),
                ";".join(_fmt(v) for v in c.gaps),
                "" if c.converged_size is None else c.converged_size,
            ])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_outliers(args) -> int:
    entries, _ = read_raw_csv(args.raw)
    summaries = summarize_records([rec for rec, _, _ in entries])
    run_id = entries[0][2] if entries else ""
    out = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(OUTLIER_COLUMNS)
        for s in summaries:
            if not s.outlier_reps:
                continue
            writer.writerow([
                run_id, s.ncm, s.model, s.dataset, s.noise, s.d, s.n,
                _fmt(s.epsilon), ";".join(str(r) for r in s.outlier_reps),
                _fmt(s.mean_efficiency), _fmt(s.se_efficiency),
                _fmt(s.corrected_mean_efficiency), _fmt(s.corrected_se_efficiency),
            ])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "gen-data": _cmd_gen_data,
    "summarize": _cmd_summarize,
    "convergence": _cmd_convergence,
    "outliers": _cmd_outliers,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # hard failure, keep the exit-code contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
