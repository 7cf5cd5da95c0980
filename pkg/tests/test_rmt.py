"""Tests for eigendecomposition, the Marchenko-Pastur law and market-mode filtering."""

import numpy as np
import pytest
from scipy import integrate

from detrendcorr.corrmat import CorrMatrix, detrended_matrix, pearson_matrix
from detrendcorr.errors import AsymmetricMatrixError, DomainError, MarchenkoPasturError, ZeroVarianceError
from detrendcorr.rmt import (
    count_outliers,
    eigen_sym,
    filter_market_mode,
    filtered_matrix,
    mp_density,
    mp_law,
    spectrum_report,
    top_contributors,
    write_eigenvector,
)
from detrendcorr.series import Panel
from detrendcorr.synthlab import gaussian_iid, one_factor, substream


class TestEigenSym:
    def test_two_by_two(self):
        spec = eigen_sym(np.array([[1.0, 0.5], [0.5, 1.0]]))
        np.testing.assert_allclose(spec.eigenvalues, [1.5, 0.5])
        np.testing.assert_allclose(spec.vector(1), [1 / np.sqrt(2), 1 / np.sqrt(2)])
        assert spec.vector(2)[0] > 0

    def test_identity(self):
        spec = eigen_sym(np.eye(5))
        np.testing.assert_allclose(spec.eigenvalues, 1.0)

    def test_matches_characteristic_polynomial(self):
        m = pearson_matrix(gaussian_iid(12, 6, seed=4))
        spec = eigen_sym(m)
        roots = np.sort(np.roots(np.poly(m.entries)).real)[::-1]
        np.testing.assert_allclose(spec.eigenvalues, roots, atol=1e-6)
        for k in range(6):
            v = spec.eigenvectors[:, k]
            np.testing.assert_allclose(m.entries @ v, spec.eigenvalues[k] * v, atol=1e-8)

    def test_orientation_and_repeatability(self, factor_panel):
        m = pearson_matrix(factor_panel)
        first = eigen_sym(m)
        second = eigen_sym(m)
        np.testing.assert_array_equal(first.eigenvectors, second.eigenvectors)
        assert np.all(first.eigenvectors.sum(axis=0) >= -1e-12)
        assert np.all(first.vector(1) > 0)

    def test_asymmetric(self):
        with pytest.raises(AsymmetricMatrixError):
            eigen_sym(np.array([[1.0, 0.5], [0.4, 1.0]]))

    def test_vector_index_range(self):
        spec = eigen_sym(np.eye(3), first_index=2)
        assert spec.value(2) == pytest.approx(1.0)
        with pytest.raises(IndexError):
            spec.vector(1)


class TestMarchenkoPastur:
    def test_bounds_at_q4(self):
        law = mp_law(400, 100)
        assert law.Q == 4.0
        assert law.bounds == pytest.approx((0.25, 2.25))

    def test_density_vanishes_at_edges(self):
        law = mp_law(400, 100)
        assert mp_density(law, 0.25) == 0.0
        assert mp_density(law, 2.25) == 0.0
        assert mp_density(law, 3.0) == 0.0
        assert mp_density(law, 1.0) > 0

    @pytest.mark.parametrize("Q", [1.5, 4.0, 20.0])
    def test_density_integrates_to_one(self, Q):
        law = mp_law(int(100 * Q), 100)
        total, _ = integrate.quad(law.density, *law.bounds, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_bounds_shrink_for_long_series(self):
        law = mp_law(10**6, 1)
        assert law.lambda_minus == pytest.approx(1.0, abs=1e-2)
        assert law.lambda_plus == pytest.approx(1.0, abs=1e-2)

    def test_sigma_scales_bounds(self):
        assert mp_law(400, 100, sigma2=2.0).bounds == pytest.approx((0.5, 4.5))

    @pytest.mark.parametrize("T, I", [(100, 100), (50, 100)])
    def test_undefined_for_short_series(self, T, I):
        with pytest.raises(MarchenkoPasturError):
            mp_law(T, I)


class TestOutliers:
    def test_identity_inside_bounds(self):
        outliers = count_outliers(eigen_sym(np.eye(10)), mp_law(40, 10))
        assert outliers.n_above == 0 and outliers.n_below == 0

    def test_factor_panel(self, factor_panel):
        law = mp_law(len(factor_panel), factor_panel.n_columns)
        outliers = count_outliers(eigen_sym(pearson_matrix(factor_panel)), law)
        assert outliers.n_above >= 1
        assert outliers.lambda1_ratio > 3

    @pytest.mark.slow
    def test_null_model(self):
        law = mp_law(5000, 90)
        quiet = 0
        for seed in range(100):
            spec = eigen_sym(pearson_matrix(gaussian_iid(5000, 90, seed=seed)))
            quiet += count_outliers(spec, law).n_above <= 2
        assert quiet >= 95

    @pytest.mark.slow
    def test_null_spectrum_follows_density(self):
        law = mp_law(5000, 90)
        eigenvalues = np.concatenate(
            [eigen_sym(pearson_matrix(gaussian_iid(5000, 90, seed=seed))).eigenvalues for seed in range(10)]
        )
        grid = np.linspace(*law.bounds, 400)
        cdf = integrate.cumulative_trapezoid(law.density(grid), grid, initial=0.0)
        empirical = np.searchsorted(np.sort(eigenvalues), grid, side="right") / len(eigenvalues)
        assert np.max(np.abs(empirical - cdf)) < 0.05


class TestMarketModeFilter:
    def test_pure_factor_leaves_no_residual(self):
        panel = one_factor(300, 5, loading=0.5, seed=3, idio_sigma=0.0)
        filtered = filter_market_mode(panel, np.full(5, 1 / np.sqrt(5)))
        np.testing.assert_allclose(filtered.residuals.values, 0.0, atol=1e-10)

    def test_regression_coefficients(self):
        rng = substream(5)
        z = rng.standard_normal(400)
        values = np.column_stack([1.0 + 2.0 * z, -0.5 * z + 0.1 * rng.standard_normal(400)])
        panel = Panel.from_array(values, ["a", "b"])
        filtered = filter_market_mode(panel, np.array([1.0, 0.0]))
        assert filtered.regression()["a"] == pytest.approx((0.0, 1.0), abs=1e-10)
        assert filtered.regression()["b"][1] == pytest.approx(-0.25, abs=0.02)
        np.testing.assert_allclose(filtered.z1.values, values[:, 0])

    def test_null_panel_is_nearly_unchanged(self):
        panel = gaussian_iid(5000, 90, seed=14)
        before = pearson_matrix(panel)
        spec = eigen_sym(before)
        after = filtered_matrix(filter_market_mode(panel, spec.vector(1)))
        change = np.abs(np.abs(after.offdiag()).mean() - np.abs(before.offdiag()).mean())
        assert change < 0.01

    def test_factor_is_removed(self, factor_panel):
        law = mp_law(len(factor_panel), factor_panel.n_columns)
        spec = eigen_sym(pearson_matrix(factor_panel))
        assert spec.value(1) / law.lambda_plus > 3

        filtered = filter_market_mode(factor_panel, spec.vector(1))
        after = eigen_sym(filtered_matrix(filtered), first_index=2)
        assert after.value(2) / law.lambda_plus < 1.5
        assert after.first_index == 2

    def test_second_filtering_removes_less(self, factor_panel):
        first_spec = eigen_sym(pearson_matrix(factor_panel))
        once = filter_market_mode(factor_panel, first_spec.vector(1))
        once_spec = eigen_sym(filtered_matrix(once))
        twice = filter_market_mode(once.residuals, once_spec.vector(1))
        twice_spec = eigen_sym(filtered_matrix(twice))
        first_drop = first_spec.eigenvalues[0] / once_spec.eigenvalues[0]
        second_drop = once_spec.eigenvalues[0] / twice_spec.eigenvalues[0]
        assert second_drop < first_drop

    def test_detrended_filtered_matrix(self, factor_panel):
        spec = eigen_sym(pearson_matrix(factor_panel))
        m = filtered_matrix(filter_market_mode(factor_panel, spec.vector(1)), "detrended", q=2.0, s=20)
        assert m.kind == "detrended"
        assert m.size == factor_panel.n_columns

    def test_wrong_vector_length(self, iid_panel):
        with pytest.raises(DomainError):
            filter_market_mode(iid_panel, np.ones(3))

    def test_zero_factor(self):
        panel = Panel.from_array(np.column_stack([np.arange(10.0), -np.arange(10.0)]), ["a", "b"])
        with pytest.raises(ZeroVarianceError):
            filter_market_mode(panel, np.array([1.0, 1.0]))


class TestReports:
    def test_top_contributors(self):
        vectors = CorrMatrix(
            np.array([[1.0, 0.8, -0.6], [0.8, 1.0, -0.5], [-0.6, -0.5, 1.0]]), ["a", "b", "c"]
        )
        contributors = top_contributors(eigen_sym(vectors), 1, k=2)
        assert [label for label, _ in contributors["positive"]] == ["a", "b"]
        assert [label for label, _ in contributors["negative"]] == ["c"]

    def test_spectrum_report_flags_detrended_as_heuristic(self, iid_panel):
        law = mp_law(len(iid_panel), iid_panel.n_columns)
        pearson = spectrum_report(eigen_sym(pearson_matrix(iid_panel)), law)
        detrended = spectrum_report(eigen_sym(detrended_matrix(iid_panel, 2.0, 16)), law)
        assert pearson["heuristic"] is False
        assert detrended["heuristic"] is True
        assert detrended["source"]["s"] == 16
        assert sum(pearson["eigenvalues"]) == pytest.approx(iid_panel.n_columns)

    def test_write_eigenvector(self, tmp_path, iid_panel):
        spec = eigen_sym(pearson_matrix(iid_panel))
        write_eigenvector(spec, 1, tmp_path / "v1.csv")
        lines = (tmp_path / "v1.csv").read_text().splitlines()
        assert lines[0] == "label,component"
        assert len(lines) == iid_panel.n_columns + 1
