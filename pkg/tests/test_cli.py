"""Tests for the affinity CLI."""

import json
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest
from typer.testing import CliRunner

from fanaffinity.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, app
from fanaffinity.synth import MANIFEST_FILE

runner = CliRunner()

EXAMPLE_CONFIG = Path(__file__).parent.parent / "configs" / "synth_example.json"
SMALL_CONFIG = {
    "seed": 11,
    "states": [
        {"code": "CA", "n_users": 300, "lean": -0.3},
        {"code": "TX", "n_users": 300, "lean": 0.4},
    ],
}


@pytest.fixture
def workdir():
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def dataset(workdir):
    """A small synthetic dataset; returns its manifest path."""
    config = workdir / "synth.json"
    config.write_text(json.dumps(SMALL_CONFIG))
    result = runner.invoke(app, ["synth", str(config), "--out", str(workdir / "data")])
    assert result.exit_code == EXIT_OK, result.output
    return workdir / "data" / MANIFEST_FILE


class TestValidate:
    def test_valid_dataset(self, dataset):
        result = runner.invoke(app, ["validate", "--manifest", str(dataset)])
        assert result.exit_code == EXIT_OK
        assert '"ok": true' in result.output

    def test_missing_follower_file(self, dataset):
        (dataset.parent / "followers" / "trump.txt").unlink()
        result = runner.invoke(app, ["validate", "-m", str(dataset)])
        assert result.exit_code == EXIT_INVALID
        assert '"missing_file"' in result.output

    def test_digest_mismatch(self, dataset):
        with open(dataset.parent / "followers" / "biden.txt", "a") as f:
            f.write("999\n")
        result = runner.invoke(app, ["validate", "-m", str(dataset)])
        assert result.exit_code == EXIT_INVALID
        assert '"digest_mismatch"' in result.output
        assert '"biden"' in result.output


class TestSynth:
    def test_shipped_example(self, workdir):
        result = runner.invoke(
            app, ["synth", str(EXAMPLE_CONFIG), "-o", str(workdir / "data"), "--seed", "5"]
        )
        assert result.exit_code == EXIT_OK, result.output
        assert "Ground truth (not an input):" in result.output
        assert (workdir / "data" / MANIFEST_FILE).is_file()

    def test_invalid_config(self, workdir):
        config = workdir / "bad.json"
        config.write_text(json.dumps({"seed": 1, "states": [{"code": "CA", "n_users": -1, "lean": 0}]}))
        result = runner.invoke(app, ["synth", str(config), "-o", str(workdir / "data")])
        assert result.exit_code == EXIT_INVALID
        assert "states.0.n_users" in result.output


class TestReport:
    def test_writes_tables(self, dataset, workdir):
        out = workdir / "report"
        result = runner.invoke(
            app, ["report", "-m", str(dataset), "-o", str(out), "--level", "team", "--threads", "2"]
        )
        assert result.exit_code == EXIT_OK, result.output
        assert (out / "ratios.csv").is_file()
        assert (out / "senator_breakdown.csv").is_file()
        assert (out / "cdr_team.csv").is_file()

    @pytest.mark.parametrize("fmt", ["csv", "text"])
    def test_thread_count_does_not_change_output(self, dataset, workdir, fmt):
        outputs = []
        for threads in (1, 4, 8):
            out = workdir / f"t{threads}"
            result = runner.invoke(
                app,
                [
                    "report",
                    "-m",
                    str(dataset),
                    "-o",
                    str(out),
                    "--level",
                    "team",
                    "-f",
                    fmt,
                    "--threads",
                    str(threads),
                ],
            )
            assert result.exit_code == EXIT_OK, result.output
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outputs[0]
        assert outputs[1] == outputs[0]
        assert outputs[2] == outputs[0]

    def test_text_format(self, dataset, workdir):
        out = workdir / "report"
        result = runner.invoke(app, ["report", "-m", str(dataset), "-o", str(out), "-f", "text"])
        assert result.exit_code == EXIT_OK, result.output
        assert (out / "cdr_state.txt").is_file()

    def test_invalid_dataset(self, dataset, workdir):
        (dataset.parent / "followers" / "sanders.txt").unlink()
        result = runner.invoke(app, ["report", "-m", str(dataset), "-o", str(workdir / "report")])
        assert result.exit_code == EXIT_INVALID

    def test_missing_manifest(self, workdir):
        result = runner.invoke(
            app, ["report", "-m", str(workdir / "nope.json"), "-o", str(workdir / "report")]
        )
        assert result.exit_code == EXIT_RUNTIME

    def test_invalid_threshold(self, dataset, workdir):
        result = runner.invoke(
            app,
            [
                "report",
                "-m",
                str(dataset),
                "-o",
                str(workdir / "report"),
                "--malformed-threshold",
                "1.5",
            ],
        )
        assert result.exit_code == EXIT_INVALID
        assert "malformed_threshold" in result.output

    def test_summation_modes_agree_on_small_cohorts(self, dataset, workdir):
        tables = {}
        for mode in ("sequential", "compensated", "auto"):
            out = workdir / mode
            result = runner.invoke(
                app, ["report", "-m", str(dataset), "-o", str(out), "--summation", mode]
            )
            assert result.exit_code == EXIT_OK, result.output
            tables[mode] = (out / "cdr_state.csv").read_text()
        assert tables["auto"] == tables["sequential"]
        assert tables["compensated"].splitlines()[0] == tables["sequential"].splitlines()[0]

    def test_unknown_summation(self, dataset, workdir):
        result = runner.invoke(
            app, ["report", "-m", str(dataset), "-o", str(workdir / "r"), "--summation", "kahan"]
        )
        assert result.exit_code != EXIT_OK

    def test_track(self, dataset, workdir):
        with patch("fanaffinity.tracking.ReportTracker") as tracker_cls:
            tracker_cls.return_value.log_report.return_value = "run-123"
            result = runner.invoke(
                app,
                ["report", "-m", str(dataset), "-o", str(workdir / "r"), "--track", "-e", "exp"],
            )
        assert result.exit_code == EXIT_OK, result.output
        assert "Tracked run run-123" in result.output
        tracker_cls.assert_called_once_with("exp")
        params = tracker_cls.return_value.log_report.call_args.kwargs["params"]
        assert params["level"] == "state"
        assert params["manifest_digest"].startswith("sha256:")


class TestCollect:
    def test_collected_dataset_validates(self, dataset, workdir):
        out = workdir / "collected"
        result = runner.invoke(
            app, ["collect", "-m", str(dataset), "-o", str(out), "--page-size", "100"]
        )
        assert result.exit_code == EXIT_OK, result.output
        assert "rate-limit waits" in result.output

        check = runner.invoke(app, ["validate", "-m", str(out / MANIFEST_FILE)])
        assert check.exit_code == EXIT_OK, check.output
