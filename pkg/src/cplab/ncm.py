"""Nonconformity measures and their interval-construction rules.

Three measures are supported:

* absolute      score = |y - mu(x)|,          interval mu +- a*
* normalized    score = |y - mu(x)| / s(x),   interval mu +- a*s(x)
* quantile      score = max(qlo - y, y - qhi), interval (qlo - a*, qhi + a*)

For the normalized measure, s(x) comes from a second regressor of the same
kind fitted to (x, ln|residual|) on the proper training set; s = exp(pred).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset
from .models import ModelKind, TrainConfig, fit_model

SIGMA_FLOOR = 1e-6     # applied after exp, keeps the division bounded
RESIDUAL_FLOOR = 1e-8  # applied before log; tree models produce exact zeros


class NcmKind(str, Enum):
    ABSOLUTE = "absolute"
    NORMALIZED = "normalized"
    QUANTILE = "quantile"


@dataclass(frozen=True)
class NcmSpec:
    """A measure plus, for the quantile kind, its two regression levels."""

    kind: NcmKind
    eps_low: float | None = None
    eps_high: float | None = None

    def __post_init__(self):
        if self.kind == NcmKind.QUANTILE:
            if self.eps_low is None or self.eps_high is None:
                raise ValueError("quantile measure needs eps_low and eps_high")
            if not 0.0 < self.eps_low < self.eps_high < 1.0:
                raise ValueError(
                    f"need 0 < eps_low < eps_high < 1, "
                    f"got ({self.eps_low}, {self.eps_high})"
                )
        elif self.eps_low is not None or self.eps_high is not None:
            raise ValueError(f"{self.kind.value} measure takes no quantile levels")

    @classmethod
    def absolute(cls) -> "NcmSpec":
        return cls(NcmKind.ABSOLUTE)

    @classmethod
    def normalized(cls) -> "NcmSpec":
        return cls(NcmKind.NORMALIZED)

    @classmethod
    def quantile_for(cls, eps: float) -> "NcmSpec":
        """Symmetric levels eps/2 and 1 - eps/2 for target miscoverage eps."""
        if not 0.0 < eps < 1.0:
            raise ValueError(f"miscoverage must be in (0, 1), got {eps}")
        return cls(NcmKind.QUANTILE, eps / 2.0, 1.0 - eps / 2.0)


def score_absolute(y, y_hat):
    """|y - y_hat|, elementwise."""
    return np.abs(np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float))


def score_normalized(y, y_hat, sigma):
    """|y - y_hat| / sigma with sigma floored at SIGMA_FLOOR.

    Raises if any sigma is nonpositive; values in (0, SIGMA_FLOOR) are
    clamped up to the floor before dividing.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma must be strictly positive")
    return score_absolute(y, y_hat) / np.maximum(sigma, SIGMA_FLOOR)


def score_quantile(y, q_low, q_high):
    """max(q_low - y, y - q_high); negative when y lies inside the band."""
    y = np.asarray(y, dtype=float)
    return np.maximum(np.asarray(q_low, dtype=float) - y,
                      y - np.asarray(q_high, dtype=float))


@dataclass(frozen=True)
class SigmaModel:
    """Difficulty estimator: exp of a regressor trained on log residuals."""

    base: object

    def predict_sigma(self, X: np.ndarray) -> np.ndarray:
        log_sigma = self.base.predict(X)[0]
        return np.maximum(np.exp(log_sigma), SIGMA_FLOOR)


def fit_sigma_model(proper_train: Dataset, base_model, cfg: TrainConfig) -> SigmaModel:
    """Fit a same-kind regressor to (x, ln|y - mu(x)|) on the proper train set."""
    if base_model.kind == ModelKind.GBQR:
        raise ValueError(
            "normalized measure needs a mean regressor; "
            "quantile ensembles provide none"
        )
    mu = base_model.predict(proper_train.features)[0]
    resid = np.maximum(np.abs(proper_train.targets - mu), RESIDUAL_FLOOR)
    log_train = Dataset(features=proper_train.features, targets=np.log(resid))
    return SigmaModel(fit_model(base_model.kind, log_train, cfg))


@dataclass(frozen=True)
class IntervalBatch:
    """Per-point prediction intervals plus a count of clamped-empty ones."""

    lower: np.ndarray
    upper: np.ndarray
    zero_width_count: int

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower/upper shape mismatch")

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (self.lower <= y) & (y <= self.upper)


def build_interval(kind: NcmKind, threshold: float, *, mean=None, sigma=None,
                   q_low=None, q_high=None) -> IntervalBatch:
    """Construct intervals for one measure from its prediction record.

    Quantile intervals with crossed endpoints (possible when the threshold
    is negative) are collapsed to their midpoint and counted as zero-width.
    """
    if kind == NcmKind.ABSOLUTE:
        if mean is None:
            raise ValueError("absolute measure needs mean predictions")
        mean = np.asarray(mean, dtype=float)
        return IntervalBatch(mean - threshold, mean + threshold, 0)
    if kind == NcmKind.NORMALIZED:
        if mean is None or sigma is None:
            raise ValueError("normalized measure needs mean and sigma predictions")
        mean = np.asarray(mean, dtype=float)
        half = threshold * np.asarray(sigma, dtype=float)
        return IntervalBatch(mean - half, mean + half, 0)
    if kind == NcmKind.QUANTILE:
        if q_low is None or q_high is None:
            raise ValueError("quantile measure needs both quantile predictions")
        lower = np.asarray(q_low, dtype=float) - threshold
        upper = np.asarray(q_high, dtype=float) + threshold
        crossed = lower > upper
        if np.any(crossed):
            mid = 0.5 * (lower[crossed] + upper[crossed])
            lower = lower.copy()
            upper = upper.copy()
            lower[crossed] = mid
            upper[crossed] = mid
        return IntervalBatch(lower, upper, int(np.count_nonzero(crossed)))
    raise ValueError(f"unknown measure kind {kind}")
