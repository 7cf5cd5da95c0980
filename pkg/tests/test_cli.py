"""Tests for the detrendcorr command line."""

import json

import pytest

from detrendcorr import __version__
from detrendcorr.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from detrendcorr.errors import EmptyTickTableError
from detrendcorr.series import read_panel


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    """Keep a stray .env in the working directory from leaking into the run."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("DETRENDCORR_JOBS", raising=False)
    monkeypatch.delenv("DETRENDCORR_OUTPUT_DIR", raising=False)


@pytest.fixture
def panel_file(tmp_path):
    path = tmp_path / "panel.csv"
    assert main(["synth", "one_factor", "--T", "600", "--I", "6", "--param", "loading=0.7", "--seed", "5", "-o", str(path)]) == EXIT_OK
    return path


class TestUsage:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["summon"])
        assert exc.value.code == 2

    def test_missing_start(self, market_dir):
        assert main(["ingest", str(market_dir / "ticks")]) == EXIT_USAGE

    def test_missing_input_file(self, tmp_path):
        assert main(["dist", str(tmp_path / "absent.csv")]) == EXIT_USAGE

    def test_bad_generator_parameter(self):
        assert main(["synth", "ar1", "--param", "phi"]) == EXIT_USAGE

    def test_bad_jobs(self, panel_file):
        assert main(["--jobs", "0", "corr", str(panel_file), "-o", "m.csv"]) == EXIT_USAGE


class TestSubcommands:
    def test_synth_writes_panel(self, panel_file):
        panel = read_panel(panel_file)
        assert panel.labels == [f"syn{i:03d}" for i in range(6)]
        assert len(panel) == 600

    def test_synth_tree_needs_prefix(self):
        assert main(["synth", "pa_tree", "--I", "10"]) == EXIT_USAGE
        assert main(["synth", "pa_tree", "--I", "10", "-o", "tree"]) == EXIT_OK

    def test_ingest_to_stdout(self, market_dir, capsys):
        code = main(["ingest", str(market_dir / "ticks"), "--start", "2022-01-01T00:00:00Z", "--days", "60"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("collection_id")

    def test_empty_ticks_is_analysis_failure(self, tmp_path, mocker):
        mocker.patch("detrendcorr.cli.load_ticks", side_effect=EmptyTickTableError("no records"))
        assert main(["ingest", str(tmp_path), "--start", "2022-01-01"]) == EXIT_FAILURE

    def test_mfdfa_report(self, panel_file, tmp_path):
        out = tmp_path / "mfdfa.json"
        code = main(["mfdfa", str(panel_file), "--column", "syn001", "--scales", "10:120:log8", "-o", str(out)])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert list(report) == ["syn001"]
        assert len(report["syn001"]["hurst"]["q"]) == 17

    def test_unknown_column(self, panel_file):
        assert main(["mfdfa", str(panel_file), "--column", "nope"]) == EXIT_USAGE

    def test_corr_rmt_mst_chain(self, panel_file, tmp_path, capsys):
        matrix = tmp_path / "rho.csv"
        assert main(["corr", str(panel_file), "--kind", "detrended", "--q", "2", "--s", "20", "-o", str(matrix)]) == EXIT_OK
        assert (tmp_path / "rho.json").exists()

        assert main(["rmt", str(matrix), "--panel", str(panel_file)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["raw"]["heuristic"] is True
        assert report["filtered"]["first_index"] == 2

        assert main(["mst", str(matrix), str(tmp_path / "tree"), "--svg", str(tmp_path / "tree.svg")]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["hub"]["hub"].startswith("syn")
        assert (tmp_path / "tree_edges.csv").exists()
        assert (tmp_path / "tree.svg").read_text(encoding="utf-8").count('id="node-') == 6

    def test_corr_needs_single_q(self, panel_file):
        assert main(["corr", str(panel_file), "--kind", "detrended", "--q", "1,2", "-o", "m.csv"]) == EXIT_USAGE

    def test_rmt_needs_length(self, panel_file, tmp_path):
        matrix = tmp_path / "p.csv"
        assert main(["corr", str(panel_file), "-o", str(matrix)]) == EXIT_OK
        assert main(["rmt", str(matrix)]) == EXIT_USAGE
        assert main(["rmt", str(matrix), "--T", "600"]) == EXIT_OK

    def test_sweep_table(self, panel_file, capsys):
        assert main(["corr", str(panel_file), "--q", "1,2", "--sweep", "10,20"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "q,s,mean_offdiag,lambda1,flagged"
        assert len(lines) == 5


class TestFlaggedMatrices:
    def test_mst_rejects_undefined_pairs(self, flagged_matrix_path, tmp_path, capsys):
        assert main(["mst", str(flagged_matrix_path), str(tmp_path / "tree")]) == EXIT_FAILURE
        assert not (tmp_path / "tree_edges.csv").exists()
        assert "--allow-flagged" in capsys.readouterr().err

    def test_mst_with_allow_flagged(self, flagged_matrix_path, tmp_path):
        assert main(["mst", str(flagged_matrix_path), str(tmp_path / "tree"), "--allow-flagged"]) == EXIT_OK
        assert (tmp_path / "tree_edges.csv").exists()

    def test_rmt_rejects_undefined_pairs(self, flagged_matrix_path, capsys):
        assert main(["rmt", str(flagged_matrix_path), "--T", "100"]) == EXIT_FAILURE
        assert capsys.readouterr().out == ""

    def test_rmt_with_allow_flagged(self, flagged_matrix_path, capsys):
        assert main(["rmt", str(flagged_matrix_path), "--T", "100", "--allow-flagged"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["raw"]["heuristic"] is True


class TestRun:
    def _config(self, tmp_path, **extra):
        cfg = {
            "output_dir": str(tmp_path / "out"),
            "synthetic": {"kind": "gaussian_iid", "T_pts": 400, "I": 5},
            "scales": [10],
            "q": [2.0],
            "mfdfa_scales": "8:80:log6",
            "render": False,
            **extra,
        }
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_run_prints_manifest_path(self, tmp_path, capsys):
        assert main(["run", str(self._config(tmp_path))]) == EXIT_OK
        manifest_path = capsys.readouterr().out.strip()
        assert manifest_path.endswith("manifest.json")
        assert json.loads(open(manifest_path).read())["status"] == "complete"

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DETRENDCORR_OUTPUT_DIR", str(tmp_path / "env-out"))
        assert main(["run", str(self._config(tmp_path))]) == EXIT_OK
        assert (tmp_path / "env-out" / "manifest.json").exists()

    def test_seed_override(self, tmp_path):
        assert main(["run", str(self._config(tmp_path)), "--seed", "9", "--output-dir", str(tmp_path / "seeded")]) == EXIT_OK
        config = json.loads((tmp_path / "seeded" / "config.json").read_text())
        assert config["seed"] == 9

    def test_unknown_config_key(self, tmp_path):
        assert main(["run", str(self._config(tmp_path, colour="red"))]) == EXIT_USAGE

    def test_failing_stage(self, tmp_path):
        path = self._config(tmp_path, synthetic={"kind": "gaussian_iid", "T_pts": 400, "I": 2})
        assert main(["run", str(path)]) == EXIT_FAILURE
        assert (tmp_path / "out" / "manifest.json.partial").exists()

    def test_render_from_manifest(self, tmp_path, capsys):
        assert main(["run", str(self._config(tmp_path))]) == EXIT_OK
        manifest_path = capsys.readouterr().out.strip()
        assert main(["render", manifest_path]) == EXIT_OK
        rendered = capsys.readouterr().out.splitlines()
        assert any(line.endswith("mst_pearson.svg") for line in rendered)

    def test_render_bad_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("not json")
        assert main(["render", str(tmp_path / "manifest.json")]) == EXIT_USAGE
