"""Tests for fluctuation grids, Hurst fits and singularity spectra."""

import numpy as np
import pytest

from detrendcorr.errors import DomainError, InsufficientDataError
from detrendcorr.mfdfa import (
    DEFAULT_Q_GRID,
    DetrendConfig,
    HurstResult,
    default_scales,
    detrended_segments,
    fluctuation_pair,
    generalized_hurst,
    hurst,
    read_grid,
    segment_matrix,
    segment_variance,
    single_fluctuation,
    singularity_spectrum,
    tau_spectrum,
    write_grid,
)
from detrendcorr.synthlab import cascade, fgn, substream


@pytest.fixture
def noise():
    return substream(21).standard_normal(2048)


def _hurst_result(q, h):
    q = np.asarray(q, dtype=float)
    h = np.asarray(h, dtype=float)
    return HurstResult(q, h, np.full(len(q), 0.01), np.ones(len(q)), (10, 100))


class TestDetrendConfig:
    def test_default_q_grid_skips_zero(self):
        assert 0.0 not in DEFAULT_Q_GRID
        assert DEFAULT_Q_GRID[0] == -4.0 and DEFAULT_Q_GRID[-1] == 4.0
        assert len(DEFAULT_Q_GRID) == 16

    def test_default_scales_range(self):
        scales = default_scales(5000)
        assert scales[0] == 10 and scales[-1] == 1000
        assert len(scales) <= 20

    def test_scale_below_polynomial_order(self):
        with pytest.raises(DomainError):
            DetrendConfig(m=2, s_grid=(3, 10)).scales(1000)

    def test_series_too_short_for_scales(self):
        with pytest.raises(InsufficientDataError):
            single_fluctuation(np.ones(100), DetrendConfig(s_grid=(10, 30)))

    def test_unknown_profile(self):
        with pytest.raises(DomainError):
            DetrendConfig(profile="centered")


class TestSegments:
    def test_both_ends_are_covered(self):
        x = np.arange(10, dtype=float)
        segments = segment_matrix(x, 4)
        assert segments.shape == (4, 4)
        assert segments[0].tolist() == [0, 1, 2, 3]
        assert segments[-1].tolist() == [6, 7, 8, 9]

    def test_polynomial_profile_detrends_to_zero(self):
        # linear x gives a quadratic profile inside every segment
        x = 1.0 + 0.01 * np.arange(400)
        f2 = segment_variance(detrended_segments(x, 20, m=2))
        assert np.all(f2 < 1e-20)


class TestFluctuationPair:
    def test_identical_series(self, noise):
        fxx, fyy, fxy = fluctuation_pair(noise, noise, DetrendConfig(s_grid=(16, 32, 64, 128)))
        np.testing.assert_array_equal(fxy.F, fxx.F)
        np.testing.assert_array_equal(fxy.F_norm, fxx.F_norm)
        np.testing.assert_array_equal(fyy.F, fxx.F)

    def test_mirrored_series_is_negative(self, noise):
        _, _, fxy = fluctuation_pair(noise, -noise, DetrendConfig(s_grid=(16, 32, 64, 128)))
        assert np.all(np.sign(fxy.F[fxy.valid]) == -1)
        assert np.all(np.sign(fxy.F_norm[fxy.valid]) == -1)

    def test_cauchy_schwarz_at_q2(self, noise):
        y = 0.3 * noise + substream(22).standard_normal(len(noise))
        cfg = DetrendConfig(q_grid=(2.0,), s_grid=(16, 32, 64, 128, 256))
        fxx, fyy, fxy = fluctuation_pair(noise, y, cfg)
        assert np.all(fxy.F**2 <= fxx.F * fyy.F)

    def test_length_mismatch(self, noise):
        with pytest.raises(DomainError):
            fluctuation_pair(noise, noise[:-1])

    def test_reversal_symmetry_with_midpoint_profile(self, noise):
        y = substream(23).standard_normal(len(noise))
        cfg = DetrendConfig(s_grid=(16, 40, 100), profile="midpoint")
        forward = fluctuation_pair(noise, y, cfg)
        backward = fluctuation_pair(noise[::-1], y[::-1], cfg)
        for a, b in zip(forward, backward):
            np.testing.assert_allclose(a.F, b.F, rtol=1e-10)

    def test_auto_entries_nonnegative(self, noise):
        grid = single_fluctuation(noise, DetrendConfig(s_grid=(16, 32, 64)))
        assert np.all(grid.F >= 0)
        assert np.all(grid.F_norm >= 0)


class TestDegenerateSegments:
    def test_silent_half_invalidates_negative_q(self, noise):
        x = noise[:1024].copy()
        x[512:] = 0.0
        grid = single_fluctuation(x, DetrendConfig(q_grid=(-2.0, 2.0), s_grid=(16, 32, 64)))

        negative, positive = 0, 1
        assert not grid.valid[negative].any()
        assert grid.valid[positive].all()
        assert grid.segments_used[negative, 0] == 64
        assert grid.segments_used[positive, 0] == 128
        assert grid.excluded[negative, 0] == 64

    def test_q_zero_uses_log_average(self, noise):
        cfg = DetrendConfig(q_grid=(0.0, 2.0), s_grid=(16, 32, 64))
        grid = single_fluctuation(noise, cfg)
        f2 = segment_variance(detrended_segments(noise, 16, 2))
        assert grid.value(0.0, 16) == pytest.approx(1.0)
        assert grid.normalized(0.0, 16) == pytest.approx(np.exp(0.5 * np.mean(np.log(f2))))


class TestScaleInvariance:
    def test_scaling_the_series(self, noise):
        cfg = DetrendConfig(s_grid=(16, 32, 64, 128, 256))
        base = single_fluctuation(noise, cfg)
        scaled = single_fluctuation(3.0 * noise, cfg)
        np.testing.assert_allclose(scaled.F_norm, 3.0 * base.F_norm, rtol=1e-10)
        np.testing.assert_allclose(
            generalized_hurst(scaled).h, generalized_hurst(base).h, atol=1e-10
        )


class TestHurst:
    def test_exact_power_law(self, grid_factory):
        grid = grid_factory(lambda q: 0.62)
        h, stderr = hurst(grid, 2.0)
        assert h == pytest.approx(0.62, abs=1e-9)
        assert stderr == pytest.approx(0.0, abs=1e-9)

    def test_exact_generalized_law(self, grid_factory):
        result = generalized_hurst(grid_factory(lambda q: 1 - q / 10))
        np.testing.assert_allclose(result.h, 1 - result.q / 10, atol=1e-9)
        assert result.scaling_range == (8, 256)

    def test_too_few_scales(self, grid_factory):
        with pytest.raises(InsufficientDataError):
            hurst(grid_factory(lambda q: 0.5), 2.0, scale_range=(8, 64))

    def test_q_not_on_grid(self, grid_factory):
        with pytest.raises(InsufficientDataError):
            hurst(grid_factory(lambda q: 0.5), 0.5)

    def test_invalid_cells_are_skipped(self, grid_factory):
        grid = grid_factory(lambda q: 0.5)
        grid.valid[0, :] = False
        result = generalized_hurst(grid)
        assert -2.0 not in result.q.tolist()
        assert len(result.q) == 4

    def test_rising_h_is_reported(self):
        result = _hurst_result([1, 2, 3], [0.5, 0.7, 0.9])
        assert result.monotonicity_violations() == [(1.0, 2.0), (2.0, 3.0)]

    @pytest.mark.slow
    def test_white_noise(self):
        x = substream(30).standard_normal(2**16)
        h, _ = hurst(single_fluctuation(x, DetrendConfig(q_grid=(2.0,))))
        assert h == pytest.approx(0.5, abs=0.03)

    @pytest.mark.slow
    def test_fgn_is_monofractal(self):
        x = fgn(2**16, 0.7, seed=31)
        cfg = DetrendConfig(s_grid=tuple(np.unique(np.geomspace(32, 2**16 // 5, 15).astype(int))))
        result = generalized_hurst(single_fluctuation(x, cfg))
        assert result.h_of_q[2.0][0] == pytest.approx(0.7, abs=0.05)
        assert result.h.max() - result.h.min() < 0.1


class TestSingularitySpectrum:
    def test_monofractal_collapses_to_a_point(self):
        q = np.arange(-4.0, 4.5, 0.5)
        spectrum = singularity_spectrum(_hurst_result(q, np.full(len(q), 0.6)))
        np.testing.assert_allclose(spectrum.alpha, 0.6, atol=1e-9)
        np.testing.assert_allclose(spectrum.f, 1.0, atol=1e-9)
        assert spectrum.width == pytest.approx(0.0, abs=1e-9)

    def test_linear_h_closed_form(self):
        q = np.arange(-4.0, 4.5, 0.5)
        spectrum = singularity_spectrum(_hurst_result(q, 0.7 - 0.02 * q))
        np.testing.assert_allclose(spectrum.alpha, 0.7 - 0.04 * q, atol=1e-12)
        np.testing.assert_allclose(spectrum.f, 1 - 0.02 * q**2, atol=1e-12)
        assert np.all(spectrum.f <= 1 + 1e-6)
        assert not spectrum.folded

    def test_left_branch(self):
        q = np.arange(-4.0, 4.5, 0.5)
        full = _hurst_result(q, 0.7 - 0.02 * q)
        left = singularity_spectrum(full, branch="left")
        assert left.q.min() == 0.0
        assert np.all(left.alpha <= 0.7 + 1e-12)

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            singularity_spectrum(_hurst_result([1, 2, 3, 4], [0.5] * 4))

    def test_folding_is_flagged(self):
        q = np.arange(-3.0, 3.5, 0.5)
        spectrum = singularity_spectrum(_hurst_result(q, 0.5 + 0.05 * np.cos(q)))
        assert spectrum.folded

    @pytest.mark.slow
    def test_fgn_spectrum_is_narrow(self):
        x = fgn(2**16, 0.7, seed=31)
        cfg = DetrendConfig(s_grid=tuple(np.unique(np.geomspace(32, 2**16 // 5, 15).astype(int))))
        spectrum = singularity_spectrum(generalized_hurst(single_fluctuation(x, cfg)))
        assert spectrum.width < 0.15

    @pytest.mark.slow
    def test_cascade_spectrum_is_wide(self):
        x = cascade(2**14, 14, seed=5, weight=0.7)
        spectrum = singularity_spectrum(generalized_hurst(single_fluctuation(x)))
        assert spectrum.width > 0.3

    def test_tau(self):
        result = _hurst_result([1.0, 2.0], [0.5, 0.5])
        np.testing.assert_allclose(tau_spectrum(result), [-0.5, 0.0])


class TestGridFiles:
    def test_csv_round_trip(self, tmp_path, noise):
        grid = single_fluctuation(noise, DetrendConfig(q_grid=(-1.0, 2.0), s_grid=(16, 32)))
        write_grid(grid, tmp_path / "grid.csv")
        back = read_grid(tmp_path / "grid.csv")
        np.testing.assert_array_equal(back.F, grid.F)
        np.testing.assert_array_equal(back.valid, grid.valid)
        np.testing.assert_array_equal(back.s, grid.s)
