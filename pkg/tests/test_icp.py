import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cplab.data import Dataset
from cplab.models import GpModel, ModelKind, TrainConfig, fit_model
from cplab.ncm import NcmKind, NcmSpec
from cplab.icp import CalibratedPredictor, calibrate, cqr_quantile, conformal_index


def oracle_conformal_index(cal_size, eps):
    """Smallest 1-based rank m with m >= cal_size*(1-eps), found by scan.

    Feasibility restated as eps*(cal_size+1) >= 1: the empirical p-value
    granularity 1/(cal_size+1) must not exceed the miscoverage budget.
    Works entirely in exact rational arithmetic so it cannot share float
    rounding behavior with the implementation under test.
    """
    f = Fraction(str(eps))
    feasible = f * (cal_size + 1) >= 1
    target = (1 - f) * cal_size
    for m in range(1, cal_size + 1):
        if Fraction(m) >= target:
            return m, feasible
    raise AssertionError("unreachable: target never exceeds cal_size")


def oracle_cqr_rank(n, eps):
    """Smallest 1-based rank m with m >= (1-eps)(n+1), found by scan."""
    f = Fraction(str(eps))
    need = (1 - f) * (n + 1)
    for m in range(1, n + 1):
        if Fraction(m) >= need:
            return m, True
    return None, False


class TestConformalIndexOracle:
    @pytest.mark.acceptance
    def test_matches_exhaustive_oracle(self):
        eps_grid = [0.01, 0.05, 0.1, 0.2]
        checked = 0
        for cal_size in range(1, 201):
            for eps in eps_grid:
                want_idx, want_feasible = oracle_conformal_index(cal_size, eps)
                got_idx, got_feasible = conformal_index(cal_size, eps)
                assert got_feasible == want_feasible, (cal_size, eps)
                if want_feasible:
                    assert got_idx == want_idx, (cal_size, eps)
                checked += 1
        print(f"PASS: threshold index matches rational-scan oracle "
              f"({checked} size/miscoverage combinations)")

    def test_documented_values(self):
        assert conformal_index(200, 0.1) == (180, True)
        assert conformal_index(160, 0.05) == (152, True)

    def test_small_calibration_set_infeasible(self):
        idx, feasible = conformal_index(16, 0.01)
        assert not feasible

    def test_exact_boundary_is_feasible(self):
        # 1/eps - 1 rows is the smallest feasible size
        idx, feasible = conformal_index(9, 0.1)
        assert feasible and idx == 9
        assert conformal_index(8, 0.1)[1] is False

    def test_validation(self):
        with pytest.raises(ValueError):
            conformal_index(0, 0.1)
        with pytest.raises(ValueError):
            conformal_index(10, 0.0)
        with pytest.raises(ValueError):
            conformal_index(10, 1.0)

    def test_float_product_drift_does_not_leak(self):
        # 200 * 0.9 = 180.00000000000003 in floats; exact arithmetic must
        # still return rank 180
        assert conformal_index(200, 0.1)[0] == 180
        assert conformal_index(400, 0.1)[0] == 360

    @given(
        cal_size=st.integers(min_value=1, max_value=5000),
        eps=st.sampled_from([0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25]),
    )
    def test_index_always_within_range_when_feasible(self, cal_size, eps):
        idx, feasible = conformal_index(cal_size, eps)
        if feasible:
            assert 1 <= idx <= cal_size


class TestCqrQuantile:
    @pytest.mark.acceptance
    def test_matches_exhaustive_oracle(self):
        eps_grid = [0.01, 0.05, 0.1, 0.2]
        rng = np.random.default_rng(0)
        checked = 0
        for n in range(1, 151):
            scores = np.sort(rng.normal(size=n))
            for eps in eps_grid:
                want_rank, want_feasible = oracle_cqr_rank(n, eps)
                got_val, got_feasible = cqr_quantile(scores, eps)
                assert got_feasible == want_feasible, (n, eps)
                if want_feasible:
                    assert got_val == scores[want_rank - 1], (n, eps)
                else:
                    assert math.isinf(got_val)
                checked += 1
        print(f"PASS: adjusted quantile matches rational-scan oracle "
              f"({checked} size/miscoverage combinations)")

    def test_documented_rank(self):
        scores = np.arange(1.0, 100.0)
        val, feasible = cqr_quantile(scores, 0.1)
        assert feasible and val == 90.0

    def test_small_sample_infeasible(self):
        val, feasible = cqr_quantile(np.arange(4.0), 0.1)
        assert not feasible and math.isinf(val)

    def test_boundary_uses_maximum(self):
        val, feasible = cqr_quantile(np.array([1.0, 2.0, 3.0, 4.0]), 0.2)
        assert feasible and val == 4.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cqr_quantile(np.array([]), 0.1)


class _StubModel:
    """Fixed-width predictor so calibration tests do not pay training cost."""

    kind = ModelKind.GP

    def __init__(self, offset=0.0, sd=1.0):
        self.offset = offset
        self.sd = sd

    def predict(self, x):
        mean = x[:, 0] * 0.0 + self.offset
        return mean, np.full(x.shape[0], self.sd)


class _StubSigma:
    def __init__(self, value=1.0):
        self.value = value

    def predict_sigma(self, x):
        return np.full(x.shape[0], self.value)


def _cal_dataset(scores):
    # residual of |y - 0| equals y when the stub predicts zero
    y = np.asarray(scores, dtype=float)
    return Dataset(np.zeros((y.size, 1)), y)


class TestCalibrate:
    def test_absolute_threshold_is_order_statistic(self):
        pred = calibrate(
            _StubModel(), NcmSpec.absolute(), _cal_dataset(np.arange(1.0, 11.0)), 0.2
        )
        assert pred.feasible
        assert pred.threshold == 8.0

    def test_infeasible_threshold_is_infinite(self):
        pred = calibrate(
            _StubModel(), NcmSpec.absolute(), _cal_dataset(np.arange(1.0, 5.0)), 0.1
        )
        assert not pred.feasible
        assert math.isinf(pred.threshold)
        batch = pred.predict_interval(np.zeros((3, 1)))
        assert np.all(np.isinf(batch.widths))
        assert np.all(batch.contains(np.array([1e12, -1e12, 0.0])))

    def test_normalized_with_unit_sigma_matches_absolute(self):
        cal = _cal_dataset(np.arange(1.0, 11.0))
        plain = calibrate(_StubModel(), NcmSpec.absolute(), cal, 0.2)
        scaled = calibrate(
            _StubModel(), NcmSpec.normalized(), cal, 0.2, sigma_model=_StubSigma(1.0)
        )
        assert scaled.threshold == plain.threshold
        x = np.linspace(-1, 1, 7)[:, None]
        a, b = plain.predict_interval(x), scaled.predict_interval(x)
        np.testing.assert_allclose(a.lower, b.lower)
        np.testing.assert_allclose(a.upper, b.upper)

    def test_normalized_requires_sigma_model(self):
        with pytest.raises(ValueError):
            calibrate(
                _StubModel(), NcmSpec.normalized(), _cal_dataset(np.arange(1.0, 11.0)), 0.2
            )

    def test_interval_width_grows_with_coverage(self):
        rng = np.random.default_rng(7)
        cal = _cal_dataset(rng.normal(size=400))
        x = np.zeros((1, 1))
        widths = []
        for eps in (0.2, 0.1, 0.05, 0.01):
            pred = calibrate(_StubModel(), NcmSpec.absolute(), cal, eps)
            widths.append(pred.predict_interval(x).widths[0])
        assert widths == sorted(widths)
        assert widths[0] < widths[-1]

    @given(data=st.data())
    def test_threshold_nondecreasing_in_coverage(self, data):
        n = data.draw(st.integers(min_value=30, max_value=200))
        seed = data.draw(st.integers(min_value=0, max_value=10_000))
        rng = np.random.default_rng(seed)
        cal = _cal_dataset(rng.normal(size=n))
        thresholds = [
            calibrate(_StubModel(), NcmSpec.absolute(), cal, eps).threshold
            for eps in (0.25, 0.2, 0.1, 0.05)
        ]
        for lo, hi in zip(thresholds, thresholds[1:]):
            assert hi >= lo

    def test_monte_carlo_coverage_meets_guarantee(self):
        # the stub predicts 0, true targets are standard normal, so the
        # resulting band is a true split-conformal run in miniature
        eps = 0.1
        hits = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            cal = _cal_dataset(rng.normal(size=99))
            pred = calibrate(_StubModel(), NcmSpec.absolute(), cal, eps)
            y_test = rng.normal(size=2000)
            batch = pred.predict_interval(np.zeros((2000, 1)))
            hits.append(batch.contains(y_test).mean())
        assert np.mean(hits) >= 1 - eps - 0.02

    def test_predict_interval_does_not_mutate_state(self):
        pred = calibrate(
            _StubModel(), NcmSpec.absolute(), _cal_dataset(np.arange(1.0, 11.0)), 0.2
        )
        before = pred.threshold
        pred.predict_interval(np.zeros((5, 1)))
        pred.predict_interval(np.ones((2, 1)))
        assert pred.threshold == before
        assert np.all(np.diff(pred.scores) >= 0)


def _quantile_setup(eps=0.2, n_cal=60, seed=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, (200, 1))
    y = rng.normal(size=200)
    train = Dataset(x[:100], y[:100])
    cal = Dataset(x[100:100 + n_cal], y[100:100 + n_cal])
    spec = NcmSpec.quantile_for(eps)
    model = fit_model(
        ModelKind.GBQR, train, TrainConfig(seed=seed),
        quantile_levels=(spec.eps_low, spec.eps_high),
    )
    return model, spec, cal


class TestCalibrateQuantile:
    def test_quantile_needs_matching_model(self):
        model, spec, cal = _quantile_setup()
        with pytest.raises(ValueError):
            calibrate(_StubModel(), spec, cal, 0.2)

    def test_level_mismatch_rejected(self):
        model, _, cal = _quantile_setup(eps=0.2)
        with pytest.raises(ValueError):
            calibrate(model, NcmSpec.quantile_for(0.1), cal, 0.1)

    def test_absolute_rejects_quantile_model(self):
        model, _, cal = _quantile_setup()
        with pytest.raises(ValueError):
            calibrate(model, NcmSpec.absolute(), cal, 0.2)

    def test_negative_threshold_shrinks_band(self):
        # constant targets inside a wide predicted band give negative scores,
        # so the calibrated band must be narrower than the raw quantile band
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 10, (300, 1))
        y = np.concatenate([rng.normal(size=150) * 3.0, np.zeros(150)])
        spec = NcmSpec.quantile_for(0.2)
        model = fit_model(
            ModelKind.GBQR, Dataset(x[:150], y[:150]), TrainConfig(seed=4),
            quantile_levels=(spec.eps_low, spec.eps_high),
        )
        cal = Dataset(x[150:], y[150:])
        pred = calibrate(model, spec, cal, 0.2)
        assert pred.threshold < 0.0
        probe = x[:20]
        quantiles = model.predict(probe)
        batch = pred.predict_interval(probe)
        raw_width = quantiles[:, 1] - quantiles[:, 0]
        assert np.all(batch.widths <= raw_width + 1e-12)

    def test_infeasible_quantile_calibration(self):
        model, spec, _ = _quantile_setup()
        rng = np.random.default_rng(5)
        tiny = Dataset(rng.uniform(0, 10, (4, 1)), rng.normal(size=4))
        pred = calibrate(model, spec, tiny, 0.1)
        assert not pred.feasible
        batch = pred.predict_interval(tiny.features)
        assert np.all(np.isinf(batch.widths))


class TestCalibrateValidation:
    def test_empty_calibration_rejected(self):
        with pytest.raises(ValueError):
            calibrate(
                _StubModel(), NcmSpec.absolute(),
                Dataset(np.zeros((0, 1)), np.zeros(0)), 0.1,
            )

    def test_scores_stored_sorted(self):
        pred = calibrate(
            _StubModel(), NcmSpec.absolute(),
            _cal_dataset(np.array([5.0, 1.0, 3.0])), 0.2,
        )
        np.testing.assert_array_equal(pred.scores, [1.0, 3.0, 5.0])

    def test_constructor_rejects_unsorted_scores(self):
        with pytest.raises(ValueError):
            CalibratedPredictor(
                ncm=NcmSpec.absolute(), epsilon=0.1,
                scores=np.array([3.0, 1.0]), threshold=3.0, feasible=True,
                model=_StubModel(),
            )
