"""Split conformal calibration and interval prediction.

Calibration sorts nonconformity scores from a held-out calibration set and
picks a threshold by order statistic:

* absolute/normalized: the N-th score, N = ceil(cal_size * (1 - eps))
* quantile:            the ceil((1 - eps) * (cal_size + 1))-th score

Index arithmetic runs on exact rationals so float rounding can never move
an order statistic by one (e.g. 200 * 0.9 = 180.00000000000003 in floats).
Configurations whose calibration set is too small for the requested
coverage are flagged infeasible and produce infinite intervals, not errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import Dataset
from .models import ModelKind
from .ncm import (
    IntervalBatch,
    NcmKind,
    NcmSpec,
    SigmaModel,
    build_interval,
    score_absolute,
    score_normalized,
    score_quantile,
)


def _exact(eps: float) -> Fraction:
    # str() round-trips the decimal the user wrote (0.1 -> Fraction(1, 10))
    return Fraction(str(eps))


def conformal_index(cal_size: int, eps: float) -> tuple[int, bool]:
    """1-based index N = ceil(cal_size * (1 - eps)) and a feasibility flag.

    Feasible iff cal_size >= 1/eps - 1; below that no finite threshold can
    deliver the requested coverage.
    """
    if cal_size < 1:
        raise ValueError(f"calibration size must be >= 1, got {cal_size}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"miscoverage must be in (0, 1), got {eps}")
    f = _exact(eps)
    index = math.ceil(cal_size * (1 - f))
    feasible = Fraction(cal_size) >= 1 / f - 1
    return index, feasible


def cqr_quantile(scores: np.ndarray, eps: float) -> tuple[float, bool]:
    """The ceil((1 - eps)(1 + 1/n) * n)-th order statistic of the scores.

    Returns (value, feasible); when the index exceeds n the configuration
    is infeasible and the value is +inf (the requested coverage would need
    a score beyond the sample).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"miscoverage must be in (0, 1), got {eps}")
    n = scores.size
    index = math.ceil((1 - _exact(eps)) * (n + 1))
    if index > n:
        return math.inf, False
    return float(np.sort(scores)[index - 1]), True


@dataclass(frozen=True)
class CalibratedPredictor:
    """Frozen calibration state: sorted scores, threshold, model references."""

    ncm: NcmSpec
    epsilon: float
    scores: np.ndarray
    threshold: float
    feasible: bool
    model: object
    sigma_model: SigmaModel | None = None

    def __post_init__(self):
        if self.scores.size < 1:
            raise ValueError("calibration produced no scores")
        if np.any(np.diff(self.scores) < 0):
            raise ValueError("scores must be sorted ascending")

    def predict_interval(self, X: np.ndarray) -> IntervalBatch:
        """Per-point intervals; infinite on every point when infeasible."""
        kind = self.ncm.kind
        if kind == NcmKind.QUANTILE:
            preds = self.model.predict(X)
            return build_interval(kind, self.threshold,
                                  q_low=preds[:, 0], q_high=preds[:, -1])
        mean = self.model.predict(X)[0]
        if kind == NcmKind.ABSOLUTE:
            return build_interval(kind, self.threshold, mean=mean)
        sigma = self.sigma_model.predict_sigma(X)
        return build_interval(kind, self.threshold, mean=mean, sigma=sigma)


def calibrate(model, ncm: NcmSpec, cal: Dataset, eps: float,
              sigma_model: SigmaModel | None = None) -> CalibratedPredictor:
    """Score the calibration set and derive the interval threshold.

    The model must have been fitted on the proper training set only; this
    function reads calibration targets and nothing else.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"miscoverage must be in (0, 1), got {eps}")

    if ncm.kind == NcmKind.QUANTILE:
        if model.kind != ModelKind.GBQR:
            raise ValueError("quantile measure requires a quantile regressor")
        levels = (ncm.eps_low, ncm.eps_high)
        if len(model.levels) != 2 or any(
            abs(a - b) > 1e-12 for a, b in zip(model.levels, levels)
        ):
            raise ValueError(
                f"regressor levels {model.levels} do not match measure levels {levels}"
            )
        preds = model.predict(cal.features)
        scores = score_quantile(cal.targets, preds[:, 0], preds[:, -1])
        sorted_scores = np.sort(scores)
        threshold, feasible = cqr_quantile(sorted_scores, eps)
        return CalibratedPredictor(ncm, eps, sorted_scores, threshold,
                                   feasible, model)

    if model.kind == ModelKind.GBQR:
        raise ValueError(f"{ncm.kind.value} measure requires a mean regressor")
    mean = model.predict(cal.features)[0]
    if ncm.kind == NcmKind.ABSOLUTE:
        scores = score_absolute(cal.targets, mean)
    else:
        if sigma_model is None:
            raise ValueError("normalized measure requires a sigma model")
        scores = score_normalized(cal.targets, mean,
                                  sigma_model.predict_sigma(cal.features))
    sorted_scores = np.sort(scores)
    index, feasible = conformal_index(sorted_scores.size, eps)
    threshold = float(sorted_scores[index - 1]) if feasible else math.inf
    return CalibratedPredictor(ncm, eps, sorted_scores, threshold, feasible,
                               model, sigma_model)
