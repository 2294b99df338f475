"""Synthetic regression data generators and tabular CSV ingestion.

Synthetic targets follow a sum-of-damped-sines signal with one of four
noise structures (constant Gaussian, signal-proportional Gaussian,
right-skewed, and a spiky Poisson mixture defined for one-dimensional
inputs only). Real datasets come in as headered numeric CSV files and can
be standardized and subsampled for size sweeps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np


class DataError(Exception):
    """Base class for dataset construction and ingestion failures."""


class MissingColumnError(DataError):
    """A requested column is absent from the CSV header."""


class NonNumericCellError(DataError):
    """A CSV cell in a selected column could not be parsed as a float."""


class ZeroVarianceError(DataError):
    """A column is constant on the fitting split, so it cannot be scaled."""


class SplitError(DataError):
    """Requested split fractions leave at least one part empty."""


class NoiseKind(str, Enum):
    """Noise structure added on top of the deterministic signal."""

    HOMO_GAUSS = "homo_gauss"
    HETERO_GAUSS = "hetero_gauss"
    RIGHT_SKEW = "right_skew"
    HETERO_NONGAUSS = "hetero_nongauss"


@dataclass(frozen=True)
class SyntheticSpec:
    """Full description of one synthetic dataset draw."""

    d: int
    n: int
    noise_kind: NoiseKind
    noise_level: float
    seed: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")
        if self.noise_kind == NoiseKind.HETERO_NONGAUSS and self.d != 1:
            raise ValueError("hetero_nongauss noise is defined only for d=1")


@dataclass(frozen=True)
class Standardization:
    """Per-feature and target affine transform fitted on one split."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: float
    target_scale: float

    def apply(self, features: np.ndarray, targets: np.ndarray):
        x = (features - self.feature_mean) / self.feature_scale
        y = (targets - self.target_mean) / self.target_scale
        return x, y

    def invert(self, features: np.ndarray, targets: np.ndarray):
        x = features * self.feature_scale + self.feature_mean
        y = targets * self.target_scale + self.target_mean
        return x, y

    def invert_targets(self, targets: np.ndarray) -> np.ndarray:
        return targets * self.target_scale + self.target_mean


def _frozen_array(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus target vector.

    ``standardization`` is set once :func:`standardize` has been applied and
    carries the statistics needed to map predictions back to the raw scale.
    """

    features: np.ndarray
    targets: np.ndarray
    standardization: Standardization | None = None

    def __post_init__(self):
        features = _frozen_array(np.atleast_2d(self.features))
        targets = _frozen_array(self.targets)
        if targets.ndim != 1:
            raise ValueError("targets must be one-dimensional")
        if features.shape[0] != targets.shape[0]:
            raise ValueError(
                f"row mismatch: {features.shape[0]} feature rows vs "
                f"{targets.shape[0]} targets"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        """Row subset as a new Dataset, standardization carried along."""
        return Dataset(
            self.features[np.asarray(indices)],
            self.targets[np.asarray(indices)],
            self.standardization,
        )


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint index sets for proper training, calibration, and test."""

    proper_train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("proper_train", "calibration", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=int))


def signal(x: np.ndarray) -> np.ndarray | float:
    """Noise-free target: sum over dimensions of x * sin(x).

    Accepts a single length-d row (returns a float) or an (n, d) matrix
    (returns a length-n vector).
    """
    x = np.asarray(x, dtype=float)
    out = np.sum(x * np.sin(x), axis=-1)
    return float(out) if out.ndim == 0 else out


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a synthetic dataset; bitwise deterministic given the seed.

    For d=1 the features are uniform on [0, 10]; for d>1 they are standard
    normal. The target is the signal plus noise as selected by
    ``spec.noise_kind`` at level ``spec.noise_level``.
    """
    rng = np.random.default_rng(spec.seed)
    n, d, c = spec.n, spec.d, spec.noise_level
    if d == 1:
        features = rng.uniform(0.0, 10.0, size=(n, 1))
    else:
        features = rng.standard_normal(size=(n, d))
    s = signal(features)

    kind = spec.noise_kind
    if kind == NoiseKind.HOMO_GAUSS:
        targets = s + c * rng.standard_normal(n)
    elif kind == NoiseKind.HETERO_GAUSS:
        # the signal-proportional term scales with the noiseless magnitude
        eps1 = rng.standard_normal(n)
        eps2 = rng.standard_normal(n)
        targets = s + c * eps1 + c * np.abs(s) * eps2
    elif kind == NoiseKind.RIGHT_SKEW:
        targets = s + c * rng.lognormal(0.0, 1.0, n)
    elif kind == NoiseKind.HETERO_NONGAUSS:
        x = features[:, 0]
        pois = rng.poisson(np.sin(x) ** 2 + 0.1)
        eps1 = rng.standard_normal(n)
        eps2 = rng.standard_normal(n)
        u = rng.uniform(0.0, 1.0, n)
        targets = pois + 0.03 * x * eps1 + 25.0 * (u < 0.01) * eps2
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown noise kind {kind}")
    return Dataset(features, targets)


def load_csv(
    path: str | Path,
    target_column: str,
    feature_columns: list[str] | None = None,
) -> Dataset:
    """Read a headered, comma-separated numeric CSV into a Dataset.

    ``feature_columns`` defaults to every non-target column, in header
    order. No standardization is applied here.

    Raises:
        FileNotFoundError: the path does not exist.
        MissingColumnError: a requested column is not in the header.
        NonNumericCellError: a selected cell fails float parsing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty CSV file: {path}") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise MissingColumnError(f"target column {target_column!r} not in header {header}")
        if feature_columns is None:
            feature_columns = [h for h in header if h != target_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise MissingColumnError(f"feature columns {missing} not in header {header}")
        col_idx = [header.index(c) for c in feature_columns]
        tgt_idx = header.index(target_column)

        rows: list[list[float]] = []
        targets: list[float] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(row[i]) for i in col_idx])
                targets.append(float(row[tgt_idx]))
            except (ValueError, IndexError) as exc:
                raise NonNumericCellError(f"{path}:{line_no}: non-numeric cell ({exc})") from None
    if not rows:
        raise DataError(f"CSV file has a header but no data rows: {path}")
    return Dataset(np.array(rows), np.array(targets))


def standardize(ds: Dataset, fit_indices: np.ndarray) -> Dataset:
    """Rescale features and target to zero mean / unit scale.

    Statistics are computed on ``fit_indices`` only (population scale) and
    retained on the returned Dataset for the inverse transform. The whole
    dataset is transformed with those statistics.
    """
    fit_indices = np.asarray(fit_indices, dtype=int)
    if fit_indices.size == 0:
        raise ValueError("fit split is empty")
    fx = ds.features[fit_indices]
    fy = ds.targets[fit_indices]
    f_mean = fx.mean(axis=0)
    f_scale = fx.std(axis=0)
    for j, s in enumerate(f_scale):
        if s <= 0.0:
            raise ZeroVarianceError(f"feature column {j} has zero variance on the fitting split")
    t_mean = float(fy.mean())
    t_scale = float(fy.std())
    if t_scale <= 0.0:
        raise ZeroVarianceError("target column has zero variance on the fitting split")
    std = Standardization(
        _frozen_array(f_mean), _frozen_array(f_scale), t_mean, t_scale
    )
    x, y = std.apply(ds.features, ds.targets)
    return Dataset(x, y, std)


def subsample(ds: Dataset, size: int, seed: int) -> Dataset:
    """Uniform draw of ``size`` rows without replacement."""
    if size > ds.n:
        raise ValueError(f"subsample size {size} exceeds dataset size {ds.n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(ds.n, size=size, replace=False)
    return ds.take(idx)


def split(
    ds: Dataset,
    train_frac: float,
    proper_frac: float,
    seed: int,
    synthetic_test_size: int | None = None,
) -> SplitIndices:
    """Partition a pool into proper-train / calibration / test index sets.

    Real-data mode (default): a (1 - train_frac) share of the pool is held
    out as the test set and the rest is split proper/calibration by
    ``proper_frac``.

    Synthetic mode (``synthetic_test_size`` given): the entire pool is
    training data, split by ``proper_frac``; the test indices 0..size-1
    refer to a separately generated test dataset.
    """
    if not (0.0 < train_frac < 1.0 and 0.0 < proper_frac < 1.0):
        raise ValueError("fractions must lie strictly inside (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    if synthetic_test_size is not None:
        train_pool = perm
        test = np.arange(synthetic_test_size)
    else:
        n_train = int(round(ds.n * train_frac))
        train_pool = perm[:n_train]
        test = perm[n_train:]
    k = int(round(train_pool.size * proper_frac))
    proper = train_pool[:k]
    cal = train_pool[k:]
    if proper.size == 0 or cal.size == 0 or test.size == 0:
        raise SplitError(
            f"empty split: proper={proper.size} cal={cal.size} test={test.size}"
        )
    return SplitIndices(proper, cal, test)
