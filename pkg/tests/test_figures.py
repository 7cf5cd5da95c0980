"""Tests for SVG figure rendering."""

import json
import re

import numpy as np
import pytest

from detrendcorr.corrmat import offdiag_histogram, pearson_matrix
from detrendcorr.figures import (
    plot_eigenvalues,
    plot_fluctuations,
    plot_tree,
    render_figures,
    save_svg,
)
from detrendcorr.mfdfa import DetrendConfig, single_fluctuation, write_grid
from detrendcorr.mstnet import Tree, write_tree
from detrendcorr.rmt import eigen_sym, mp_law, spectrum_report
from detrendcorr.synthlab import gaussian_iid, pa_tree


def _ids(svg_text, prefix):
    return re.findall(rf'id="({prefix}[^"]*)"', svg_text)


@pytest.fixture
def small_tree():
    tree = pa_tree(12, seed=2)
    return tree.with_attributes(sizes=np.arange(1.0, 13.0), communities=[i % 3 for i in range(12)])


class TestPlots:
    def test_tree_has_one_element_per_node_and_edge(self, tmp_path, small_tree):
        path = tmp_path / "tree.svg"
        plot_tree(small_tree, path)
        svg = path.read_text(encoding="utf-8")
        assert len(_ids(svg, "node-")) == 12
        assert len(_ids(svg, "edge-")) == 11
        assert "edge-0-1" in svg

    def test_eigenvalue_figure_has_density_curve(self, tmp_path):
        panel = gaussian_iid(400, 40, seed=3)
        spec = eigen_sym(pearson_matrix(panel))
        path = tmp_path / "eigen.svg"
        law = mp_law(400, 40)
        fig = plot_eigenvalues(spec.eigenvalues, law, path)
        assert _ids(path.read_text(encoding="utf-8"), "mp-curve") == ["mp-curve"]
        [curve] = [line for line in fig.axes[0].get_lines() if line.get_gid() == "mp-curve"]
        assert curve.get_xdata()[0] == pytest.approx(law.lambda_minus)
        assert curve.get_xdata()[-1] == pytest.approx(law.lambda_plus)

    def test_fluctuations_use_log_axes(self, iid_panel):
        grid = single_fluctuation(iid_panel.column(iid_panel.labels[0]), DetrendConfig(s_grid=(16, 32, 64)))
        fig = plot_fluctuations(grid, q_values=[-2.0, 2.0])
        ax = fig.axes[0]
        assert ax.get_xscale() == "log" and ax.get_yscale() == "log"
        assert len(ax.get_lines()) == 2

    def test_saved_svg_is_reproducible(self, tmp_path, small_tree):
        first = save_svg(plot_tree(small_tree), tmp_path / "a.svg").read_bytes()
        second = save_svg(plot_tree(small_tree), tmp_path / "b.svg").read_bytes()
        assert first == second
        assert b"<dc:date>" not in first


class TestRenderFigures:
    def _manifest(self, *entries):
        return {"artifacts": [{"path": path, "kind": kind} for path, kind in entries]}

    def test_renders_known_kinds(self, tmp_path, iid_panel):
        grid = single_fluctuation(iid_panel.column(iid_panel.labels[0]), DetrendConfig(q_grid=(-4.0, -2.0, 2.0, 4.0), s_grid=(16, 32, 64)))
        (tmp_path / "mfdfa").mkdir()
        write_grid(grid, tmp_path / "mfdfa" / "syn000_grid.csv")

        m = pearson_matrix(iid_panel)
        (tmp_path / "rmt").mkdir()
        report = spectrum_report(eigen_sym(m), mp_law(len(iid_panel), iid_panel.n_columns))
        (tmp_path / "rmt" / "pearson_spectrum.json").write_text(json.dumps(report))
        (tmp_path / "corr").mkdir()
        (tmp_path / "corr" / "pearson_hist.json").write_text(json.dumps(offdiag_histogram(m).as_dict()))

        (tmp_path / "mst").mkdir()
        write_tree(Tree(["a", "b", "c"], [(0, 1, 0.5), (1, 2, 0.7)]), tmp_path / "mst" / "pearson_edges.csv", tmp_path / "mst" / "pearson_nodes.csv")

        manifest = self._manifest(
            ("mfdfa/syn000_grid.csv", "fluctuation_grid"),
            ("rmt/pearson_spectrum.json", "spectrum"),
            ("corr/pearson_hist.json", "offdiag_histogram"),
            ("mst/pearson_edges.csv", "tree_edges"),
            ("mst/pearson_nodes.csv", "tree_nodes"),
            ("config.json", "config"),
        )
        (tmp_path / "config.json").write_text("{}")

        written = render_figures(manifest, tmp_path)

        names = sorted(p.name for p in written)
        assert names == ["eigen_pearson_spectrum.svg", "fluct_syn000_grid.svg", "mst_pearson.svg", "pearson_hist.svg"]
        assert all(p.parent == tmp_path / "figures" for p in written)

    def test_missing_artifact_is_skipped(self, tmp_path, caplog):
        manifest = self._manifest(("mfdfa/gone_grid.csv", "fluctuation_grid"))
        with caplog.at_level("WARNING"):
            assert render_figures(manifest, tmp_path) == []
        assert "mfdfa/gone_grid.csv is missing" in caplog.text

    def test_tree_without_nodes_is_skipped(self, tmp_path, caplog):
        (tmp_path / "mst").mkdir()
        write_tree(Tree(["a", "b"], [(0, 1, 0.5)]), tmp_path / "mst" / "x_edges.csv", tmp_path / "mst" / "x_nodes.csv")
        with caplog.at_level("WARNING"):
            written = render_figures(self._manifest(("mst/x_edges.csv", "tree_edges")), tmp_path)
        assert written == []
        assert "no node table" in caplog.text
