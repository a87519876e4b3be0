import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from fairbound import __version__
from fairbound.core import EFFECTS
from fairbound.main import app

runner = CliRunner()


@pytest.fixture
def generated_dir(tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(app, ["generate", "--n", "2000", "--seed", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.mark.unit
class TestVersion:
    def test_version(self):
        result = runner.invoke(app, ["version"])
        assert result.exit_code == 0
        assert f"fairbound {__version__}" in result.output


@pytest.mark.integration
class TestGenerateAndBounds:
    """generate, then bounds and sweep on the generated records."""

    def test_generate_artifacts(self, generated_dir):
        for name in ("data.csv", "exogenous.json", "splits.json", "oracle.json", "resolved_config.json"):
            assert (generated_dir / name).exists(), name

    def test_no_confounding_bounds_are_points(self, generated_dir, tmp_path):
        out = tmp_path / "bounds"
        result = runner.invoke(app, [
            "bounds", "--data", str(generated_dir / "data.csv"), "--gamma-m", "1", "--gamma-y", "1",
            "--oracle", str(generated_dir / "oracle.json"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "bounds.json").read_text())
        for e in EFFECTS:
            assert report[e]["hi"] - report[e]["lo"] == pytest.approx(0.0, abs=1e-9)
        assert set(report["containment"]) == set(EFFECTS)
        assert (out / "summary.md").exists()
        assert (out / "tables.json").exists()

    def test_bounds_with_face_and_oracle(self, generated_dir, tmp_path):
        out = tmp_path / "bounds"
        result = runner.invoke(app, [
            "bounds", "--data", str(generated_dir / "data.csv"), "--gamma-m", "5", "--gamma-y", "5",
            "--oracle", str(generated_dir / "oracle.json"), "--face", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "bounds.json").read_text())
        assert "face" in report
        assert set(report["oracle"]) == set(EFFECTS)

    def test_config_file_section(self, generated_dir, tmp_path):
        """Settings come from the command's section of the run config."""
        config = tmp_path / "run.yml"
        out = tmp_path / "from_config"
        config.write_text(
            f"data: {generated_dir / 'data.csv'}\nbounds:\n  gamma_m: 1.5\n  out: {out}\n"
        )
        result = runner.invoke(app, ["bounds", "--config", str(config)])
        assert result.exit_code == 0, result.output
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert json.loads((out / "bounds.json").read_text())["gamma_m"] == 1.5
        assert resolved

    def test_sweep_rows(self, generated_dir, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(app, [
            "sweep", "--data", str(generated_dir / "data.csv"), "--grid", "1.2,2,5", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(out / "sweep.csv")
        assert len(frame) == 3

    def test_sweep_descending_grid(self, generated_dir, tmp_path):
        result = runner.invoke(app, [
            "sweep", "--data", str(generated_dir / "data.csv"), "--grid", "5,2", "--out", str(tmp_path / "s"),
        ])
        assert result.exit_code == 2


@pytest.mark.unit
class TestInputErrors:
    def test_malformed_csv(self, write_csv, tmp_path):
        path = write_csv("a,z,m,y\n0,1,0,1\n1,0,1\n", "broken.csv")
        result = runner.invoke(app, ["bounds", "--data", str(path), "--out", str(tmp_path / "b")])
        assert result.exit_code == 2

    def test_missing_data_file(self, tmp_path):
        result = runner.invoke(app, ["bounds", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "b")])
        assert result.exit_code == 2

    def test_bounds_needs_data(self, tmp_path):
        result = runner.invoke(app, ["bounds", "--out", str(tmp_path / "b")])
        assert result.exit_code == 2

    def test_gamma_below_one(self, write_csv, tmp_path):
        path = write_csv("a,z,m,y\n0,0,0,0\n0,1,1,1\n1,0,1,0\n1,1,0,1\n", "tiny.csv")
        result = runner.invoke(app, [
            "bounds", "--data", str(path), "--gamma-m", "0.5", "--out", str(tmp_path / "b"),
        ])
        assert result.exit_code == 2

    def test_oracle_check_zero_budget(self, tmp_path):
        result = runner.invoke(app, ["oracle-check", "--budget", "0", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_train_unknown_mode(self, generated_dir, tmp_path):
        result = runner.invoke(app, [
            "train", "--data", str(generated_dir / "data.csv"), "--mode", "robust", "--out", str(tmp_path / "m"),
        ])
        assert result.exit_code == 2


@pytest.mark.integration
class TestOracleCheck:
    def test_random_tables(self, tmp_path):
        out = tmp_path / "oracle"
        result = runner.invoke(app, [
            "oracle-check", "--gamma-m", "2", "--gamma-y", "2", "--budget", "2048", "--seed", "4", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert "Containment holds" in result.output
        report = json.loads((out / "oracle_report.json").read_text())
        assert report["contained"] is True
        assert report["source"] == "random tables"
        assert (out / "summary.md").exists()


@pytest.mark.e2e
class TestTrainAndEvaluate:
    """train writes model artifacts that evaluate can reload."""

    @pytest.mark.parametrize("mode", ["standard", "fair"])
    def test_train_then_evaluate(self, generated_dir, tmp_path, mode):
        model = tmp_path / mode
        result = runner.invoke(app, [
            "train", "--data", str(generated_dir / "data.csv"), "--mode", mode, "--hidden", "8",
            "--epochs", "2", "--max-iterations", "2", "--nested-epochs", "1", "--lr", "0.001",
            "--out", str(model),
        ])
        assert result.exit_code == 0, result.output
        for name in ("predictor.json", "g_a.json", "g_m.json", "train_report.json", "eval_report.json", "eval.csv"):
            assert (model / name).exists(), name

        result = runner.invoke(app, [
            "evaluate", "--data", str(generated_dir / "data.csv"), "--model", str(model), "--gamma-m", "2",
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((model / "eval_report.json").read_text())
        assert report["metric"] == "roc_auc"
        assert 0.0 <= report["fairness"] <= 1.0
