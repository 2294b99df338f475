"""Coverage/width metrics and per-cell aggregation across repetitions.

A "cell" is one experimental configuration (measure, model, data source,
dimension, training size, miscoverage). Each repetition of a cell yields a
MetricsRecord; summarize() folds the repetitions of one cell into means,
standard errors, the mean absolute coverage gap, and an IQR-based screen
for inefficiency outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ncm import IntervalBatch

CONVERGENCE_TOLERANCE = 1e-3
IQR_MULTIPLIER = 1.5


@dataclass(frozen=True)
class MetricsRecord:
    """Result of one repetition of one cell.

    efficiency is the mean interval width on the original target scale;
    it is +inf exactly when the configuration was infeasible (infinite
    intervals). Wall-clock timings stay out of this type on purpose: a
    record must be bitwise-reproducible from (cell, seed).
    """

    ncm: str
    model: str
    dataset: str
    noise: str
    d: int
    n: int
    epsilon: float
    rep: int
    seed: int
    validity: float
    efficiency: float
    infeasible: bool
    zero_width_count: int

    def __post_init__(self):
        if not 0.0 <= self.validity <= 1.0:
            raise ValueError(f"validity must be in [0, 1], got {self.validity}")
        if math.isfinite(self.efficiency) and self.efficiency < 0:
            raise ValueError(f"efficiency must be >= 0, got {self.efficiency}")
        if math.isinf(self.efficiency) and not self.infeasible:
            raise ValueError("infinite efficiency requires the infeasible flag")
        if self.zero_width_count < 0:
            raise ValueError("zero_width_count must be >= 0")

    def cell_key(self) -> tuple:
        return (self.ncm, self.model, self.dataset, self.noise,
                self.d, self.n, self.epsilon)


@dataclass(frozen=True)
class CellSummary:
    """Aggregates over the repetitions of one cell.

    Corrected statistics are computed with outlier repetitions removed;
    when the screen flags nothing (or is skipped) they equal the raw ones.
    """

    ncm: str
    model: str
    dataset: str
    noise: str
    d: int
    n: int
    epsilon: float
    repetitions: int
    mean_validity: float
    se_validity: float
    mean_efficiency: float
    se_efficiency: float
    mean_abs_coverage_gap: float
    se_abs_coverage_gap: float
    outlier_reps: tuple
    corrected_mean_efficiency: float
    corrected_se_efficiency: float
    n_infeasible: int
    total_zero_width: int


@dataclass(frozen=True)
class OutlierReport:
    """Flagged repetition positions and statistics over the remainder."""

    indices: tuple
    corrected_mean: float
    corrected_se: float


def validity(intervals: IntervalBatch, truths: np.ndarray) -> float:
    """Fraction of truths inside their interval; membership is closed."""
    truths = np.asarray(truths, dtype=float)
    if truths.ndim != 1 or truths.size == 0:
        raise ValueError("truths must be a nonempty vector")
    if intervals.lower.shape != truths.shape:
        raise ValueError(
            f"{intervals.lower.size} intervals vs {truths.size} truths"
        )
    return float(np.mean(intervals.contains(truths)))


def efficiency(intervals: IntervalBatch) -> float:
    """Mean interval width; +inf when any interval is infinite."""
    widths = intervals.widths
    if widths.size == 0:
        raise ValueError("no intervals")
    if not np.all(np.isfinite(widths)):
        return math.inf
    return float(np.mean(widths))


def _se(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def detect_outliers(efficiencies) -> OutlierReport:
    """Flag repetitions above the upper IQR fence of log-efficiency.

    Fence = Q3 + 1.5 * (Q3 - Q1) over ln(efficiency); only the upper side
    is screened, since only unusually wide intervals distort cell means.
    Requires at least 4 strictly positive, finite efficiencies.
    """
    eff = np.asarray(efficiencies, dtype=float)
    if eff.size < 4:
        raise ValueError(f"outlier screen needs >= 4 repetitions, got {eff.size}")
    if np.any(~np.isfinite(eff)) or np.any(eff <= 0):
        raise ValueError("efficiencies must be finite and positive")
    logs = np.log(eff)
    q1, q3 = np.percentile(logs, [25.0, 75.0])
    fence = q3 + IQR_MULTIPLIER * (q3 - q1)
    flagged = np.flatnonzero(logs > fence)
    if flagged.size >= eff.size - 1:
        raise ValueError("nearly all repetitions flagged; degenerate cell")
    keep = np.delete(eff, flagged)
    return OutlierReport(tuple(int(i) for i in flagged),
                         float(np.mean(keep)), _se(keep))


def summarize(records) -> CellSummary:
    """Fold one cell's repetitions into a CellSummary.

    Repetition order does not matter (records are sorted by rep index).
    The outlier screen runs only when it is well-posed: at least 4
    repetitions, all efficiencies finite and positive; otherwise the
    corrected statistics simply repeat the raw ones.
    """
    records = sorted(records, key=lambda r: r.rep)
    if len(records) < 2:
        raise ValueError("standard errors need at least 2 repetitions")
    first = records[0]
    if any(r.cell_key() != first.cell_key() for r in records):
        raise ValueError("records span more than one cell")
    reps = [r.rep for r in records]
    if len(set(reps)) != len(reps):
        raise ValueError(f"duplicate repetition indices: {sorted(reps)}")

    vals = np.array([r.validity for r in records])
    effs = np.array([r.efficiency for r in records])
    gaps = np.abs(vals - (1.0 - first.epsilon))
    n_infeasible = sum(r.infeasible for r in records)

    if np.all(np.isfinite(effs)):
        mean_eff, se_eff = float(np.mean(effs)), _se(effs)
    else:
        mean_eff, se_eff = math.inf, math.inf

    outliers: tuple = ()
    corrected_mean, corrected_se = mean_eff, se_eff
    if len(records) >= 4 and np.all(np.isfinite(effs)) and np.all(effs > 0):
        report = detect_outliers(effs)
        if report.indices:
            outliers = tuple(records[i].rep for i in report.indices)
            corrected_mean, corrected_se = report.corrected_mean, report.corrected_se

    return CellSummary(
        ncm=first.ncm, model=first.model, dataset=first.dataset,
        noise=first.noise, d=first.d, n=first.n, epsilon=first.epsilon,
        repetitions=len(records),
        mean_validity=float(np.mean(vals)), se_validity=_se(vals),
        mean_efficiency=mean_eff, se_efficiency=se_eff,
        mean_abs_coverage_gap=float(np.mean(gaps)), se_abs_coverage_gap=_se(gaps),
        outlier_reps=outliers,
        corrected_mean_efficiency=corrected_mean,
        corrected_se_efficiency=corrected_se,
        n_infeasible=int(n_infeasible),
        total_zero_width=int(sum(r.zero_width_count for r in records)),
    )


def convergence_size(sizes, gaps, tolerance: float = CONVERGENCE_TOLERANCE):
    """Smallest size where the mean absolute coverage gap stabilizes.

    Returns the first size s_j (j >= 1) with |gap_j - gap_{j-1}| below the
    tolerance, or None when the sequence never settles.
    """
    sizes = list(sizes)
    gaps = list(gaps)
    if len(sizes) != len(gaps):
        raise ValueError("sizes and gaps must have equal length")
    if len(sizes) < 2:
        raise ValueError("need at least 2 sizes")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    for j in range(1, len(sizes)):
        if abs(gaps[j] - gaps[j - 1]) < tolerance:
            return sizes[j]
    return None
