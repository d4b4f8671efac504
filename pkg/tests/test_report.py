"""Tests for report tables and the CSV / text emitters."""

import tempfile
from pathlib import Path

import pandas as pd
import pytest

from conftest import build_snapshot
from fanaffinity.models import Level, OutputFormat
from fanaffinity.report import NA, emit_report, format_value
from fanaffinity.synth import load_synth_config, simulate

EXAMPLE_CONFIG = Path(__file__).parent.parent / "configs" / "synth_example.json"
CDR_COLUMNS = ["cdr_trump", "cdr_biden", "cdr_sanders"]


@pytest.fixture(scope="module")
def example_snapshot():
    return simulate(load_synth_config(EXAMPLE_CONFIG.read_text())).snapshot()


def _text_rows(text: str) -> list[list[str]]:
    """Data rows of the first table in a text report."""
    lines = text.splitlines()[2:]
    rows = []
    for line in lines:
        if not line.strip():
            break
        rows.append(line.split())
    return rows


class TestFormatValue:
    def test_three_decimals(self):
        assert format_value(0.51849) == "0.518"
        assert format_value(1.0) == "1.000"

    def test_undefined(self):
        assert format_value(None) == NA
        assert format_value(float("nan")) == NA


class TestEmitCsv:
    def test_state_level_tables(self, example_snapshot):
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            result = emit_report(example_snapshot, out, Level.STATE, OutputFormat.CSV)
            cdr = pd.read_csv(out / "cdr_state.csv")
            ratios = pd.read_csv(out / "ratios.csv")
            raw = (out / "cdr_state.csv").read_bytes()

        assert [p.name for p in result.files[:3]] == [
            "ratios.csv",
            "senator_breakdown.csv",
            "cdr_state.csv",
        ]
        assert len(cdr) == 12
        assert list(cdr.columns[:3]) == ["league", "state", "cohort_size"]
        for total in cdr[CDR_COLUMNS].sum(axis=1):
            assert total == pytest.approx(1.0, abs=1e-9)
        assert b"\r\n" not in raw
        assert raw.startswith(b"league,state,cohort_size,cds_trump")

        assert {"engagement_rate", "political_interest_rate", "ratio_trump"} <= set(ratios.columns)
        ratio_sums = ratios[["ratio_trump", "ratio_biden", "ratio_sanders"]].sum(axis=1)
        assert ratio_sums.round(9).eq(1.0).all()

    def test_sport_level(self, example_snapshot):
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            emit_report(example_snapshot, out, Level.SPORT, OutputFormat.CSV)
            cdr = pd.read_csv(out / "cdr_sport.csv")
            breakdown = pd.read_csv(out / "senator_breakdown.csv")
        assert cdr["league"].tolist() == ["NBA", "NFL"]
        assert "state" not in cdr.columns
        shares = breakdown[["only_democrat", "only_republican", "both"]].sum(axis=1)
        assert shares.round(9).eq(1.0).all()

    def test_team_rows_add_up_to_state_rows(self, example_snapshot):
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            emit_report(example_snapshot, out / "team", Level.TEAM)
            emit_report(example_snapshot, out / "state", Level.STATE)
            teams = pd.read_csv(out / "team" / "cdr_team.csv")
            states = pd.read_csv(out / "state" / "cdr_state.csv")
        sizes = teams.groupby(["league", "state"], sort=True)["cohort_size"].sum()
        expected = states.set_index(["league", "state"])["cohort_size"].sort_index()
        assert sizes.tolist() == expected.tolist()

    def test_undefined_rows_written_as_na(self):
        snapshot = build_snapshot(
            {"nba_lakers": [1, 2], "sen_d01": [1], "biden": [1], "nba_rockets": [3]}
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            result = emit_report(snapshot, out, Level.STATE, OutputFormat.CSV)
            cdr_text = (out / "cdr_state.csv").read_text()
            warnings = (out / "warnings.txt").read_text()
        assert "NBA,TX,0," in cdr_text
        assert cdr_text.rstrip("\n").split("\n")[2].endswith("NA,NA,NA")
        assert "CDR undefined for NBA/TX" in warnings
        assert result.files[-1].name == "warnings.txt"
        assert len(result.warnings) == len(warnings.splitlines())


class TestEmitText:
    def test_rounded_rows_still_sum_to_one(self, example_snapshot):
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            result = emit_report(example_snapshot, out, Level.STATE, OutputFormat.TEXT)
            text = (out / "cdr_state.txt").read_text()
        assert [p.suffix for p in result.files] == [".txt"] * 3
        assert text.startswith("cdr_state\n")
        rows = _text_rows(text)
        assert len(rows) == 12
        for row in rows:
            cdrs = row[-3:]
            assert all(len(v.split(".")[1]) == 3 for v in cdrs)
            assert sum(float(v) for v in cdrs) == pytest.approx(1.0, abs=0.002)

    def test_warnings_appended(self):
        snapshot = build_snapshot({"nba_lakers": [1], "sen_d01": [1], "biden": [1]})
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir)
            emit_report(snapshot, out, Level.STATE, OutputFormat.TEXT)
            text = (out / "cdr_state.txt").read_text()
            assert not (out / "warnings.txt").exists()
        assert "\nWarnings:\n" in text
        assert NA in text
