import json
import re

import numpy as np
import pytest

from airtwin.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main


def run_cli(*argv):
    return main(list(argv))


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("moran", "--nonsense")
        assert exc.value.code == EXIT_USAGE

    def test_unknown_command_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == EXIT_USAGE

    def test_missing_file_is_io_error(self, capsys):
        code = run_cli("decide", "--real", "/nope/real.csv", "--synth", "/nope/s.csv")
        assert code == EXIT_IO
        assert "/nope/real.csv" in capsys.readouterr().err

    def test_run_with_missing_data_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            '[data]\nzones_geojson = "/missing/zones.geojson"\n'
            'eea_csv = "/missing/eea.csv"\n'
            'window_start = "2019-01-01T00:00:00"\nwindow_end = "2020-01-01T00:00:00"\n'
        )
        code = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
        assert code == EXIT_IO
        err = capsys.readouterr().err
        assert "/missing/zones.geojson" in err
        assert "stage" in err


@pytest.fixture(scope="module")
def city_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("city")
    code = run_cli("generate-city", "--seed", "1", "--zones", "36", "--out", str(out))
    assert code == EXIT_OK
    return out


class TestGenerateAndTrain:
    def test_generate_city_outputs(self, city_dir, capsys):
        assert (city_dir / "zones.geojson").exists()
        assert (city_dir / "table.csv").exists()
        assert (city_dir / "real.csv").exists()

    def test_weights_and_moran(self, city_dir, tmp_path, capsys):
        wpath = tmp_path / "w.csv"
        code = run_cli(
            "weights", "--zones", str(city_dir / "zones.geojson"),
            "--k", "6", "--out", str(wpath),
        )
        assert code == EXIT_OK
        moran_json = tmp_path / "moran.json"
        code = run_cli(
            "moran", "--table", str(city_dir / "table.csv"),
            "--weights", str(wpath), "--feature", "building_density",
            "--permutations", "99", "--out", str(moran_json),
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert re.search(r"feature=building_density I=[-0-9.]+ expected_I=", out)
        assert "p_value=" in out
        doc = json.loads(moran_json.read_text())
        assert doc["feature"] == "building_density"
        assert doc["n_permutations"] == 99

    def test_generate_city_with_config_file(self, tmp_path):
        cfg = tmp_path / "city.toml"
        cfg.write_text("n_zones = 16\nrho = 0.3\n\n[coefficients]\nroad_density = 6.0\n")
        out = tmp_path / "city"
        code = run_cli("generate-city", "--seed", "3", "--config", str(cfg),
                       "--out", str(out))
        assert code == EXIT_OK
        from airtwin.geo import read_table_csv

        assert read_table_csv(out / "table.csv").n == 16

    def test_augment_train_evaluate(self, city_dir, tmp_path, capsys):
        wpath = tmp_path / "w.csv"
        run_cli("weights", "--zones", str(city_dir / "zones.geojson"),
                "--k", "6", "--out", str(wpath))
        aug = tmp_path / "aug.csv"
        cat = tmp_path / "catalog.json"
        code = run_cli(
            "augment", "--table", str(city_dir / "table.csv"),
            "--weights", str(wpath), "--out", str(aug), "--catalog", str(cat),
        )
        assert code == EXIT_OK
        assert json.loads(cat.read_text())["entries"]

        model_path = tmp_path / "model.json"
        code = run_cli(
            "train", "--table", str(aug), "--model", "gbt",
            "--trees", "15", "--max-depth", "3", "--out", str(model_path),
        )
        assert code == EXIT_OK
        doc = json.loads(model_path.read_text())
        assert doc["kind"] == "gbt"

        report_path = tmp_path / "eval.json"
        code = run_cli(
            "evaluate", "--table", str(aug), "--model", "gbt",
            "--trees", "15", "--max-depth", "3", "--cv-k", "4",
            "--out", str(report_path),
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert re.search(r"accuracy=\d+\.\d{6}", out)
        rep = json.loads(report_path.read_text())
        assert len(rep["per_fold"]) == 4

    def test_synth_decide_sensitivity(self, city_dir, tmp_path, capsys):
        model_path = tmp_path / "m.json"
        run_cli("train", "--table", str(city_dir / "table.csv"),
                "--model", "gbt", "--trees", "20", "--max-depth", "3",
                "--out", str(model_path))
        synth_path = tmp_path / "synth.csv"
        code = run_cli(
            "synth", "--model", str(model_path),
            "--table", str(city_dir / "table.csv"), "--out", str(synth_path),
        )
        assert code == EXIT_OK
        assert synth_path.exists()
        assert (tmp_path / "synth_provenance.json").exists()

        code = run_cli(
            "decide", "--real", str(city_dir / "real.csv"),
            "--synth", str(synth_path), "--out", str(tmp_path / "d.csv"),
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        m = re.search(r"agreement_rate=([0-9.]+)", out)
        assert m and 0.0 <= float(m.group(1)) <= 1.0

        code = run_cli(
            "sensitivity", "--real", str(city_dir / "real.csv"),
            "--sds", "0,2", "--trials", "100", "--out", str(tmp_path / "sens.csv"),
        )
        assert code == EXIT_OK
        assert len((tmp_path / "sens.csv").read_text().splitlines()) == 3


class TestScenarioThroughCli:
    def test_scenario_applied(self, tmp_path):
        city = tmp_path / "city"
        run_cli("generate-city", "--seed", "2", "--zones", "25", "--out", str(city))
        model_path = tmp_path / "m.json"
        run_cli("train", "--table", str(city / "table.csv"), "--model", "rf",
                "--trees", "10", "--out", str(model_path))
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps({
            "scenario_id": "calm-streets",
            "perturbations": [{"feature": "road_density", "op": "scale", "amount": 0.3}],
        }))
        base = tmp_path / "base.csv"
        pert = tmp_path / "pert.csv"
        run_cli("synth", "--model", str(model_path), "--table", str(city / "table.csv"),
                "--out", str(base))
        run_cli("synth", "--model", str(model_path), "--table", str(city / "table.csv"),
                "--scenario", str(scenario), "--out", str(pert))
        from airtwin.geo import read_value_csv

        a = np.array(list(read_value_csv(base).values()))
        b = np.array(list(read_value_csv(pert).values()))
        assert not np.array_equal(a, b)
        side = json.loads((tmp_path / "pert_provenance.json").read_text())
        assert side["scenario_id"] == "calm-streets"


class TestPipelineArtifacts:
    def test_artifact_set(self, snapshot_dir):
        expected = [
            "eval_report.json", "selection_trace.json", "catalog.json",
            "synthetic.csv", "decisions.csv", "sensitivity.csv",
            "model.json", "table.csv", "weights.csv", "zones.geojson",
            "policy.json", "real.csv", "config_resolved.json",
            "correlation.csv", "moran.csv", "drift_report.json",
        ]
        for name in expected:
            assert (snapshot_dir / name).exists(), name

    def test_figures_rendered(self, snapshot_dir):
        for name in [
            "correlation_matrix.png", "feature_importance.png",
            "selection_curve.png", "sensitivity.png",
            "no2_real.png", "no2_synthetic.png", "accuracy_map.png",
        ]:
            path = snapshot_dir / name
            assert path.exists(), name
            assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_summary_format_is_machine_parseable(self, tmp_path, capsys, tiny_pipeline_cfg):
        from airtwin.pipeline import run_pipeline

        cfg = tiny_pipeline_cfg(tmp_path / "out2", seed=6)
        assert run_pipeline(cfg) == 0
        out = capsys.readouterr().out
        for line in out.strip().splitlines():
            assert re.fullmatch(r"stage=\S+( \S+=\S+)*", line), line
