"""Sweep orchestration: cells, seeding, execution, CSV artifacts.

A sweep is a grid of cells (measure, model, data source, d, n, epsilon)
run for R repetitions each. Every repetition derives its own seeds from
(base_seed, cell id, repetition), so results are reproducible bit for bit
and independent of worker count or scheduling order.

Artifacts written to the output directory:

* raw.csv          one row per (cell, repetition)
* summary.csv      one row per cell (means, SEs, outlier correction)
* convergence.csv  per (cell group, epsilon): coverage-gap stabilization size
* outliers.csv     cells whose repetitions tripped the IQR screen
* failures.csv     repetitions that raised, with the error message
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import groupby
from pathlib import Path
from zlib import crc32

import numpy as np
import yaml

from .data import Dataset, NoiseKind, SyntheticSpec, generate, load_csv, split, standardize, subsample
from .evaluation import CellSummary, MetricsRecord, convergence_size, summarize
from .icp import calibrate
from .models import ModelKind, TrainConfig, fit_model
from .ncm import NcmKind, NcmSpec, fit_sigma_model

DEFAULT_PAIRS = (
    ("quantile", "gbqr"),
    ("absolute", "mvnn"),
    ("normalized", "mvnn"),
    ("absolute", "gp"),
    ("normalized", "gp"),
)

OUTPUT_DIR_ENV = "CPLAB_OUTPUT_DIR"

RAW_COLUMNS = (
    "run_id", "ncm", "model", "dataset", "noise", "d", "n", "epsilon",
    "rep", "seed", "validity", "efficiency", "infeasible",
    "zero_width_count", "fit_seconds", "error",
)
SUMMARY_COLUMNS = (
    "run_id", "ncm", "model", "dataset", "noise", "d", "n", "epsilon",
    "repetitions", "mean_validity", "se_validity", "mean_efficiency",
    "se_efficiency", "mean_abs_coverage_gap", "se_abs_coverage_gap",
    "outlier_reps", "corrected_mean_efficiency", "corrected_se_efficiency",
    "n_infeasible", "total_zero_width",
)
CONVERGENCE_COLUMNS = (
    "run_id", "ncm", "model", "dataset", "noise", "d", "epsilon",
    "sizes", "gaps", "converged_size",
)
OUTLIER_COLUMNS = (
    "run_id", "ncm", "model", "dataset", "noise", "d", "n", "epsilon",
    "outlier_reps", "mean_efficiency", "se_efficiency",
    "corrected_mean_efficiency", "corrected_se_efficiency",
)
FAILURE_COLUMNS = (
    "run_id", "ncm", "model", "dataset", "noise", "d", "n", "epsilon",
    "rep", "error",
)


class ConfigError(Exception):
    """Invalid sweep configuration (bad file, bad value, bad combination)."""


_VALID_PAIRS = {
    ("absolute", "mvnn"), ("absolute", "gp"),
    ("normalized", "mvnn"), ("normalized", "gp"),
    ("quantile", "gbqr"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; immutable and picklable for workers."""

    output_dir: str
    data_kind: str = "synthetic"
    dimensions: tuple = (1,)
    noises: tuple = ("homo_gauss", "hetero_gauss", "right_skew")
    noise_level: float = 0.3
    test_size: int = 10000
    csv_path: str | None = None
    target_column: str | None = None
    dataset_name: str | None = None
    sizes: tuple = tuple(range(100, 1001, 100))
    miscoverages: tuple = (0.01, 0.05, 0.1, 0.2)
    pairs: tuple = DEFAULT_PAIRS
    repetitions: int = 100
    base_seed: int = 0
    workers: int = 1
    train_frac: float = 0.8
    proper_frac: float = 0.8
    resume: bool = True
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(int(v) for v in self.dimensions))
        object.__setattr__(self, "sizes", tuple(int(v) for v in self.sizes))
        object.__setattr__(self, "miscoverages", tuple(float(v) for v in self.miscoverages))
        object.__setattr__(self, "noises", tuple(str(v) for v in self.noises))
        object.__setattr__(self, "pairs", tuple((str(p[0]), str(p[1])) for p in self.pairs))
        if not self.output_dir:
            raise ConfigError("output_dir is required")
        if self.data_kind not in ("synthetic", "csv"):
            raise ConfigError(f"data_kind must be synthetic or csv, got {self.data_kind!r}")
        if self.data_kind == "csv" and not (self.csv_path and self.target_column):
            raise ConfigError("csv data needs csv_path and target_column")
        for name in ("dimensions", "noises", "sizes", "miscoverages", "pairs"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if any(d < 1 for d in self.dimensions):
            raise ConfigError("dimensions must be >= 1")
        if any(n < 5 for n in self.sizes):
            raise ConfigError("sizes must be >= 5")
        if any(not 0.0 < e < 1.0 for e in self.miscoverages):
            raise ConfigError("miscoverage rates must lie in (0, 1)")
        for noise in self.noises:
            if noise not in {k.value for k in NoiseKind}:
                raise ConfigError(f"unknown noise kind {noise!r}")
        for pair in self.pairs:
            if pair not in _VALID_PAIRS:
                raise ConfigError(
                    f"unsupported measure/model pair {pair}; "
                    f"valid pairs: {sorted(_VALID_PAIRS)}"
                )
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be >= 0")
        if self.test_size < 1:
            raise ConfigError("test_size must be >= 1")
        if not (0.0 < self.train_frac < 1.0 and 0.0 < self.proper_frac < 1.0):
            raise ConfigError("split fractions must lie strictly inside (0, 1)")

    def run_id(self) -> str:
        payload = dataclasses.asdict(self)
        payload.pop("output_dir")       # identity of the experiment, not its location
        payload.pop("workers")
        payload.pop("resume")
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


_CONFIG_KEYS = {
    "output_dir", "base_seed", "repetitions", "workers", "resume",
    "sizes", "miscoverages", "pairs", "data", "train", "splits",
}
_DATA_KEYS = {
    "kind", "dimensions", "noises", "noise_level", "test_size",
    "path", "target_column", "name",
}
_TRAIN_KEYS = {
    "learning_rate", "epochs", "batch_size", "gp_steps", "gbqr_trees",
    "gbqr_depth", "gbqr_shrinkage", "gp_jitter",
}
_SPLIT_KEYS = {"train_frac", "proper_frac"}


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a YAML sweep config; `overrides` (CLI flags) win over the file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file does not parse: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    for section, keys in (("", _CONFIG_KEYS), ("data", _DATA_KEYS),
                          ("train", _TRAIN_KEYS), ("splits", _SPLIT_KEYS)):
        block = raw if section == "" else raw.get(section) or {}
        if not isinstance(block, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        unknown = set(block) - keys
        if unknown:
            where = section or "top level"
            raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")

    data = raw.get("data") or {}
    splits = raw.get("splits") or {}
    kwargs: dict = {}
    for key in ("output_dir", "base_seed", "repetitions", "workers",
                "resume", "sizes", "miscoverages", "pairs"):
        if key in raw:
            kwargs[key] = raw[key]
    mapping = {
        "kind": "data_kind", "dimensions": "dimensions", "noises": "noises",
        "noise_level": "noise_level", "test_size": "test_size",
        "path": "csv_path", "target_column": "target_column",
        "name": "dataset_name",
    }
    for src, dst in mapping.items():
        if src in data:
            kwargs[dst] = data[src]
    for key in _SPLIT_KEYS:
        if key in splits:
            kwargs[key] = splits[key]
    try:
        if raw.get("train"):
            kwargs["train"] = TrainConfig(**raw["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train section: {exc}")
    if overrides:
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if not kwargs.get("output_dir"):
        kwargs["output_dir"] = os.environ.get(OUTPUT_DIR_ENV, "")
    if not kwargs["output_dir"]:
        raise ConfigError(
            f"no output directory: set output_dir, --output-dir, or ${OUTPUT_DIR_ENV}"
        )
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


@dataclass(frozen=True)
class Cell:
    """One experimental configuration; repetitions vary only the seed."""

    ncm: str
    model: str
    dataset: str
    noise: str
    d: int
    n: int
    epsilon: float

    def cell_id(self) -> str:
        return (
            f"ncm={self.ncm},model={self.model},dataset={self.dataset},"
            f"noise={self.noise},d={self.d},n={self.n},eps={self.epsilon:g}"
        )

    def sort_key(self) -> tuple:
        return (self.dataset, self.noise, self.d, self.n, self.epsilon,
                self.ncm, self.model)


def build_cells(cfg: ExperimentConfig) -> list[Cell]:
    """Expand the config grid; combinations the generator cannot produce
    (heteroscedastic non-Gaussian noise above d=1) are dropped."""
    cells = []
    if cfg.data_kind == "synthetic":
        for d in cfg.dimensions:
            for noise in cfg.noises:
                if noise == NoiseKind.HETERO_NONGAUSS.value and d != 1:
                    continue
                for n in cfg.sizes:
                    for eps in cfg.miscoverages:
                        for ncm, model in cfg.pairs:
                            cells.append(Cell(ncm, model, "synthetic", noise, d, n, eps))
    else:
        full = _csv_dataset(cfg.csv_path, cfg.target_column)
        name = cfg.dataset_name or Path(cfg.csv_path).stem
        for n in cfg.sizes:
            if n > full.n:
                raise ConfigError(f"size {n} exceeds the {full.n} rows of {name}")
            for eps in cfg.miscoverages:
                for ncm, model in cfg.pairs:
                    cells.append(Cell(ncm, model, name, "", full.d, n, eps))
    return sorted(cells, key=Cell.sort_key)


def rep_seeds(base_seed: int, cell_id: str, rep: int) -> tuple[int, int, int, int, int]:
    """Five independent 32-bit seeds for one repetition of one cell:
    (record, data pool, test set, split permutation, model init)."""
    ss = np.random.SeedSequence([base_seed, crc32(cell_id.encode()), rep])
    state = ss.generate_state(5)
    return tuple(int(v) for v in state)


@lru_cache(maxsize=4)
def _csv_dataset(path: str, target_column: str) -> Dataset:
    return load_csv(path, target_column)


def _measure_spec(ncm: str, eps: float) -> NcmSpec:
    if ncm == NcmKind.QUANTILE.value:
        return NcmSpec.quantile_for(eps)
    if ncm == NcmKind.NORMALIZED.value:
        return NcmSpec.normalized()
    return NcmSpec.absolute()


def run_cell(cfg: ExperimentConfig, cell: Cell, rep: int) -> MetricsRecord:
    """Execute one repetition: data, split, fit, calibrate, metrics.

    Deterministic given (cfg, cell, rep); all randomness flows from
    rep_seeds. For CSV data the pipeline standardizes on the training
    indices and reports efficiency back on the original target scale.
    """
    from .evaluation import efficiency as eval_efficiency
    from .evaluation import validity as eval_validity

    record_seed, pool_seed, test_seed, split_seed, model_seed = rep_seeds(
        cfg.base_seed, cell.cell_id(), rep
    )
    if cfg.data_kind == "synthetic":
        noise = NoiseKind(cell.noise)
        pool = generate(SyntheticSpec(cell.d, cell.n, noise, cfg.noise_level, pool_seed))
        test_ds = generate(SyntheticSpec(cell.d, cfg.test_size, noise, cfg.noise_level, test_seed))
        idx = split(pool, cfg.train_frac, cfg.proper_frac, split_seed,
                    synthetic_test_size=cfg.test_size)
        proper, cal = pool.take(idx.proper_train), pool.take(idx.calibration)
        test_x, test_y = test_ds.features, test_ds.targets
        target_scale = 1.0
    else:
        full = _csv_dataset(cfg.csv_path, cfg.target_column)
        sub = subsample(full, cell.n, pool_seed)
        idx = split(sub, cfg.train_frac, cfg.proper_frac, split_seed)
        scaled = standardize(sub, np.concatenate([idx.proper_train, idx.calibration]))
        proper, cal = scaled.take(idx.proper_train), scaled.take(idx.calibration)
        test = scaled.take(idx.test)
        test_x, test_y = test.features, test.targets
        target_scale = scaled.standardization.target_scale

    train_cfg = dataclasses.replace(cfg.train, seed=model_seed)
    spec = _measure_spec(cell.ncm, cell.epsilon)
    levels = (spec.eps_low, spec.eps_high) if spec.kind == NcmKind.QUANTILE else None
    model = fit_model(ModelKind(cell.model), proper, train_cfg, quantile_levels=levels)
    sigma_model = None
    if spec.kind == NcmKind.NORMALIZED:
        sigma_model = fit_sigma_model(proper, model, train_cfg)

    cp = calibrate(model, spec, cal, cell.epsilon, sigma_model=sigma_model)
    intervals = cp.predict_interval(test_x)
    val = eval_validity(intervals, test_y)
    eff = eval_efficiency(intervals)
    if math.isfinite(eff):
        eff *= target_scale
    return MetricsRecord(
        ncm=cell.ncm, model=cell.model, dataset=cell.dataset, noise=cell.noise,
        d=cell.d, n=cell.n, epsilon=cell.epsilon, rep=rep, seed=record_seed,
        validity=val, efficiency=eff, infeasible=not cp.feasible,
        zero_width_count=intervals.zero_width_count,
    )


def _execute_rep(cfg: ExperimentConfig, cell: Cell, rep: int):
    start = time.perf_counter()
    try:
        record = run_cell(cfg, cell, rep)
        return cell, rep, record, time.perf_counter() - start, ""
    except Exception as exc:  # recorded, sweep continues
        message = f"{type(exc).__name__}: {exc}"
        return cell, rep, None, time.perf_counter() - start, message


@dataclass(frozen=True)
class RepFailure:
    cell: Cell
    rep: int
    error: str
    seconds: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class ConvergenceRow:
    ncm: str
    model: str
    dataset: str
    noise: str
    d: int
    epsilon: float
    sizes: tuple
    gaps: tuple
    converged_size: int | None


@dataclass(frozen=True)
class ResultTable:
    """Everything a sweep produced, in deterministic order."""

    run_id: str
    records: tuple
    summaries: tuple
    convergence: tuple
    failures: tuple


def _record_sort_key(r: MetricsRecord) -> tuple:
    return (r.dataset, r.noise, r.d, r.n, r.epsilon, r.ncm, r.model, r.rep)


def summarize_records(records) -> list[CellSummary]:
    """Group raw records by cell and fold each group; cells with fewer
    than 2 repetitions are skipped (no standard error is defined)."""
    records = sorted(records, key=_record_sort_key)
    out = []
    for _, group in groupby(records, key=MetricsRecord.cell_key):
        group = list(group)
        if len(group) >= 2:
            out.append(summarize(group))
    return out


def convergence_rows(summaries) -> list[ConvergenceRow]:
    """Coverage-gap stabilization per (measure, model, data, d, epsilon)
    group, across the sizes present; groups with one size are skipped."""
    def key(s: CellSummary):
        return (s.dataset, s.noise, s.d, s.epsilon, s.ncm, s.model)

    rows = []
    for _, group in groupby(sorted(summaries, key=lambda s: (key(s), s.n)), key=key):
        group = list(group)
        if len(group) < 2:
            continue
        sizes = tuple(s.n for s in group)
        gaps = tuple(s.mean_abs_coverage_gap for s in group)
        size = convergence_size(sizes, gaps)
        s0 = group[0]
        rows.append(ConvergenceRow(s0.ncm, s0.model, s0.dataset, s0.noise,
                                   s0.d, s0.epsilon, sizes, gaps, size))
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _raw_row(run_id: str, record: MetricsRecord, fit_seconds: float, error: str) -> list:
    return [
        run_id, record.ncm, record.model, record.dataset, record.noise,
        record.d, record.n, _fmt(record.epsilon), record.rep, record.seed,
        _fmt(record.validity), _fmt(record.efficiency), record.infeasible,
        record.zero_width_count, _fmt(fit_seconds), error,
    ]


def read_raw_csv(path: str | Path):
    """Parse raw rows back into records.

    Returns (entries, failures): entries are (record, fit_seconds, run_id)
    for clean rows; failures are raw dicts of rows that carry an error.
    """
    entries, failures = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RAW_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"raw csv missing columns: {sorted(missing)}")
        for row in reader:
            if row["error"]:
                failures.append(row)
                continue
            record = MetricsRecord(
                ncm=row["ncm"], model=row["model"], dataset=row["dataset"],
                noise=row["noise"], d=int(row["d"]), n=int(row["n"]),
                epsilon=float(row["epsilon"]), rep=int(row["rep"]),
                seed=int(row["seed"]), validity=float(row["validity"]),
                efficiency=float(row["efficiency"]),
                infeasible=row["infeasible"] == "True",
                zero_width_count=int(row["zero_width_count"]),
            )
            entries.append((record, float(row["fit_seconds"]), row["run_id"]))
    return entries, failures


def read_summary_csv(path: str | Path) -> list[dict]:
    """Summary rows as dicts with numeric fields parsed."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"summary csv missing columns: {sorted(missing)}")
        for row in reader:
            parsed = dict(row)
            for key in ("d", "n", "repetitions", "n_infeasible", "total_zero_width"):
                parsed[key] = int(row[key])
            for key in ("epsilon", "mean_validity", "se_validity",
                        "mean_efficiency", "se_efficiency",
                        "mean_abs_coverage_gap", "se_abs_coverage_gap",
                        "corrected_mean_efficiency", "corrected_se_efficiency"):
                parsed[key] = float(row[key])
            rows.append(parsed)
    return rows


def summary_from_row(row: dict) -> CellSummary:
    """Rebuild a CellSummary from a parsed summary.csv row."""
    reps = row["outlier_reps"]
    outliers = tuple(int(v) for v in reps.split(";")) if reps else ()
    return CellSummary(
        ncm=row["ncm"], model=row["model"], dataset=row["dataset"],
        noise=row["noise"], d=row["d"], n=row["n"], epsilon=row["epsilon"],
        repetitions=row["repetitions"], mean_validity=row["mean_validity"],
        se_validity=row["se_validity"], mean_efficiency=row["mean_efficiency"],
        se_efficiency=row["se_efficiency"],
        mean_abs_coverage_gap=row["mean_abs_coverage_gap"],
        se_abs_coverage_gap=row["se_abs_coverage_gap"],
        outlier_reps=outliers,
        corrected_mean_efficiency=row["corrected_mean_efficiency"],
        corrected_se_efficiency=row["corrected_se_efficiency"],
        n_infeasible=row["n_infeasible"],
        total_zero_width=row["total_zero_width"],
    )


def _summary_row(run_id: str, s: CellSummary) -> list:
    return [
        run_id, s.ncm, s.model, s.dataset, s.noise, s.d, s.n,
        _fmt(s.epsilon), s.repetitions, _fmt(s.mean_validity),
        _fmt(s.se_validity), _fmt(s.mean_efficiency), _fmt(s.se_efficiency),
        _fmt(s.mean_abs_coverage_gap), _fmt(s.se_abs_coverage_gap),
        ";".join(str(r) for r in s.outlier_reps),
        _fmt(s.corrected_mean_efficiency), _fmt(s.corrected_se_efficiency),
        s.n_infeasible, s.total_zero_width,
    ]


def write_artifacts(out_dir: Path, run_id: str, entries, failures) -> ResultTable:
    """Write all five CSVs from (record, fit_seconds, run_id) entries.

    Failed repetitions appear in raw.csv too, as rows with empty metric
    fields and the error message, so the file accounts for every attempt.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = sorted(entries, key=lambda e: _record_sort_key(e[0]))
    records = tuple(e[0] for e in entries)
    summaries = tuple(summarize_records(records))
    conv = tuple(convergence_rows(summaries))

    raw_rows = [(_record_sort_key(rec), _raw_row(rid, rec, secs, ""))
                for rec, secs, rid in entries]
    for f in failures:
        key = f.cell.sort_key() + (f.rep,)
        raw_rows.append((key, [
            run_id, f.cell.ncm, f.cell.model, f.cell.dataset, f.cell.noise,
            f.cell.d, f.cell.n, _fmt(f.cell.epsilon), f.rep, f.seed,
            "", "", "", "", _fmt(f.seconds), f.error,
        ]))
    raw_rows.sort(key=lambda pair: pair[0])
    _write_csv(out_dir / "raw.csv", RAW_COLUMNS, [row for _, row in raw_rows])
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS,
               [_summary_row(run_id, s) for s in summaries])
    _write_csv(out_dir / "convergence.csv", CONVERGENCE_COLUMNS, [
        [run_id, c.ncm, c.model, c.dataset, c.noise, c.d, _fmt(c.epsilon),
         ";".join(str(v) for v in c.sizes),
         ";".join(_fmt(v) for v in c.gaps),
         "" if c.converged_size is None else c.converged_size]
        for c in conv
    ])
    _write_csv(out_dir / "outliers.csv", OUTLIER_COLUMNS, [
        [run_id, s.ncm, s.model, s.dataset, s.noise, s.d, s.n,
         _fmt(s.epsilon), ";".join(str(r) for r in s.outlier_reps),
         _fmt(s.mean_efficiency), _fmt(s.se_efficiency),
         _fmt(s.corrected_mean_efficiency), _fmt(s.corrected_se_efficiency)]
        for s in summaries if s.outlier_reps
    ])
    _write_csv(out_dir / "failures.csv", FAILURE_COLUMNS, [
        [run_id, f.cell.ncm, f.cell.model, f.cell.dataset, f.cell.noise,
         f.cell.d, f.cell.n, _fmt(f.cell.epsilon), f.rep, f.error]
        for f in failures
    ])
    return ResultTable(run_id, records, summaries, conv, tuple(failures))


def run_sweep(cfg: ExperimentConfig, progress: bool = False) -> ResultTable:
    """Run every pending (cell, repetition), then write all artifacts.

    With resume enabled, clean rows already in raw.csv are kept and their
    repetitions skipped; rows that previously failed are retried.
    """
    out_dir = Path(cfg.output_dir)
    run_id = cfg.run_id()
    cells = build_cells(cfg)

    entries = []
    done = set()
    raw_path = out_dir / "raw.csv"
    if cfg.resume and raw_path.exists():
        entries, _ = read_raw_csv(raw_path)
        done = {(r.cell_key(), r.rep) for r, _, _ in entries}

    pending = [
        (cell, rep)
        for cell in cells
        for rep in range(cfg.repetitions)
        if ((cell.ncm, cell.model, cell.dataset, cell.noise,
             cell.d, cell.n, cell.epsilon), rep) not in done
    ]
    if progress and done:
        print(f"resuming: {len(done)} repetitions already on disk", file=sys.stderr)

    failures = []
    outcomes = []
    if cfg.workers == 1:
        for i, (cell, rep) in enumerate(pending):
            outcomes.append(_execute_rep(cfg, cell, rep))
            if progress:
                print(f"[{i + 1}/{len(pending)}] {cell.cell_id()} rep={rep}",
                      file=sys.stderr)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_execute_rep, cfg, cell, rep)
                       for cell, rep in pending]
            for i, fut in enumerate(futures):
                outcomes.append(fut.result())
                if progress:
                    print(f"[{i + 1}/{len(pending)}] done", file=sys.stderr)

    for cell, rep, record, seconds, error in outcomes:
        if error:
            seed = rep_seeds(cfg.base_seed, cell.cell_id(), rep)[0]
            failures.append(RepFailure(cell, rep, error, seconds, seed))
        else:
            entries.append((record, seconds, run_id))

    return write_artifacts(out_dir, run_id, entries, failures)


def write_synthetic_csv(spec: SyntheticSpec, path: str | Path) -> None:
    """Materialize one synthetic draw as a CSV of x0..x{d-1}, y."""
    ds = generate(spec)
    columns = [f"x{j}" for j in range(ds.d)] + ["y"]
    rows = [[_fmt(float(v)) for v in row] + [_fmt(float(t))]
            for row, t in zip(ds.features, ds.targets)]
    _write_csv(Path(path), columns, rows)
