"""Tests for CCDFs, tail fits and autocorrelation."""

import numpy as np
import pytest

from detrendcorr.diststats import (
    AcfCurve,
    acf,
    acf_decay_exponent,
    ccdf,
    fit_powerlaw_tail,
    fit_stretched_exp,
    fit_stretched_exp_ccdf,
    loglog_points,
    shuffled_surrogate,
)
from detrendcorr.errors import DegenerateTailError, DomainError, InsufficientDataError, ZeroVarianceError
from detrendcorr.synthlab import ar1, fgn, pareto, stretched_exp, substream


class TestCcdf:
    def test_counting(self):
        curve = ccdf([1.0, 2.0, 3.0, 4.0])
        assert curve.evaluate(2.5) == 0.5
        assert curve.evaluate(0.0) == 1.0
        assert curve.evaluate(4.0) == 0.0
        assert curve.points == [(1.0, 1.0), (2.0, 0.75), (3.0, 0.5), (4.0, 0.25)]

    def test_normalized_by_sample_deviation(self):
        values = substream(1).standard_normal(1000) * 5.0
        curve = ccdf(values, normalize=True)
        assert curve.sample.std(ddof=1) == pytest.approx(1.0)
        assert curve.sigma == pytest.approx(values.std(ddof=1))

    def test_constant_sample(self):
        with pytest.raises(DomainError):
            ccdf([2.0, 2.0, 2.0])

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            ccdf([1.0])

    def test_pareto_loglog_slope(self):
        curve = ccdf(pareto(100_000, 1.5, seed=2))
        x, p = loglog_points(curve, x_min=float(np.percentile(curve.sample, 90)))
        slope = np.polyfit(np.log(x), np.log(p), 1)[0]
        assert slope == pytest.approx(-1.5, abs=0.1)
        assert len(x) <= 40


class TestPowerLawTail:
    def test_hill_estimate(self):
        fit = fit_powerlaw_tail(pareto(100_000, 2.0, seed=3))
        assert fit.exponent == pytest.approx(2.0, abs=0.1)
        assert fit.n_tail == pytest.approx(10_000, abs=2)
        assert not fit.poor

    def test_geometric_tail_slope(self):
        # value 2^k appears 2^(K-k-1) times, so P(X >= 2^k) = 2^-k exactly
        K = 12
        sample = np.concatenate([np.full(2 ** (K - k - 1), 2.0**k) for k in range(K)] + [[2.0**K]])
        fit = fit_powerlaw_tail(sample, x_min=1.0, normalize=False)
        assert fit.loglog_slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0)

    def test_gaussian_is_flagged_poor(self, caplog):
        with caplog.at_level("INFO"):
            fit = fit_powerlaw_tail(substream(4).standard_normal(100_000))
        assert fit.poor
        assert fit.as_dict()["poor"] is True
        assert "fit is poor" in caplog.text

    def test_too_few_tail_samples(self):
        with pytest.raises(DegenerateTailError):
            fit_powerlaw_tail(substream(5).standard_normal(100))

    def test_nonpositive_threshold(self):
        with pytest.raises(DegenerateTailError):
            fit_powerlaw_tail(substream(5).standard_normal(1000), x_min=-1.0)


class TestStretchedExp:
    @pytest.mark.parametrize("beta", [0.35, 1.0])
    def test_exact_ccdf(self, beta):
        x = np.geomspace(0.1, 20.0, 60)
        fit = fit_stretched_exp_ccdf(x, np.exp(-(x**beta)))
        assert fit.exponent == pytest.approx(beta, abs=1e-9)
        assert fit.kind == "stretched_exp"

    def test_weibull_sample(self):
        fit = fit_stretched_exp(stretched_exp(100_000, 0.4, seed=6))
        assert fit.exponent == pytest.approx(0.4, abs=0.05)

    def test_degenerate_curve(self):
        with pytest.raises(DegenerateTailError):
            fit_stretched_exp_ccdf(np.array([1.0, 2.0]), np.array([0.5, 0.25]))


class TestAcf:
    def test_ar1(self):
        curve = acf(ar1(100_000, 0.5, seed=7), max_lag=10)
        assert curve.values[0] == pytest.approx(0.5, abs=0.02)
        assert curve.values[1] == pytest.approx(0.25, abs=0.02)
        assert curve.lags[0] == 1
        assert curve.tau[0] == 86400

    def test_white_noise_band(self):
        x = substream(8).standard_normal(100_000)
        curve = acf(x, max_lag=100)
        inside = np.abs(curve.values) < 3.5 / np.sqrt(len(x))
        assert inside.mean() >= 0.99

    def test_long_memory_against_shuffled(self):
        x = fgn(2**14, 0.9, seed=9)
        original = acf(x, max_lag=100)
        shuffled = acf(shuffled_surrogate(x, seed=1), max_lag=100)
        assert original.values[49] > 0.1
        assert np.abs(shuffled.values[40:]).max() < 0.05

    def test_max_lag_limit(self):
        with pytest.raises(InsufficientDataError):
            acf(np.arange(40.0), max_lag=10)

    def test_constant_series(self):
        with pytest.raises(ZeroVarianceError):
            acf(np.ones(100), max_lag=5)

    def test_decay_exponent(self):
        lags = np.arange(1, 51)
        kappa, stderr, r2 = acf_decay_exponent(AcfCurve(lags, 0.8 * lags**-0.3))
        assert kappa == pytest.approx(0.3, abs=1e-12)
        assert r2 == pytest.approx(1.0)

    def test_decay_needs_positive_values(self):
        with pytest.raises(InsufficientDataError):
            acf_decay_exponent(AcfCurve(np.arange(1, 5), np.array([0.1, -0.1, -0.2, -0.1])))


class TestShuffledSurrogate:
    def test_same_values_new_order(self):
        x = ar1(500, 0.8, seed=10)
        surrogate = shuffled_surrogate(x, seed=3)
        np.testing.assert_array_equal(np.sort(surrogate.values), np.sort(x.values))
        assert not np.array_equal(surrogate.values, x.values)
        np.testing.assert_array_equal(shuffled_surrogate(x, seed=3).values, surrogate.values)
