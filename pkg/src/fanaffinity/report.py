"""Report tables: CSV at full precision, aligned text at three decimals."""

import logging
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, Field

from fanaffinity.ingest import Snapshot
from fanaffinity.metrics import Summation
from fanaffinity.models import (
    CdrTable,
    GroupKey,
    Level,
    OutputFormat,
    RatioRow,
    SenatorBreakdown,
)
from fanaffinity.pipeline import run_cdr, run_ratios, run_senator_breakdown

logger = logging.getLogger(__name__)

NA = "NA"
TEXT_DECIMALS = 3


def format_value(value: float | None) -> str:
    """Text-mode rendering: three decimals, ``NA`` when undefined."""
    if value is None or pd.isna(value):
        return NA
    return f"{value:.{TEXT_DECIMALS}f}"


def _group_columns(group: GroupKey) -> dict[str, str]:
    return {"league": group.league, "state": group.state or "", "team": group.team or ""}


def _key_columns(level: Level) -> list[str]:
    return {
        Level.SPORT: ["league"],
        Level.STATE: ["league", "state"],
        Level.TEAM: ["league", "state", "team"],
    }[level]


def ratio_frame(rows: list[RatioRow], candidates: list[str], level: Level) -> pd.DataFrame:
    """Candidate following ratios, one row per grouping."""
    records = []
    for row in rows:
        record = _group_columns(row.group)
        record["fans"] = row.fans
        record["engagement_rate"] = row.engagement_rate
        record["political_interest_rate"] = row.political_interest_rate
        for c in candidates:
            record[f"overlap_{c}"] = row.overlaps.get(c, 0)
        for c in candidates:
            record[f"ratio_{c}"] = row.ratios[c] if row.ratios else None
        records.append(record)
    columns = _key_columns(level) + ["fans", "engagement_rate", "political_interest_rate"]
    columns += [f"overlap_{c}" for c in candidates] + [f"ratio_{c}" for c in candidates]
    return pd.DataFrame.from_records(records, columns=columns)


def breakdown_frame(rows: list[SenatorBreakdown], level: Level) -> pd.DataFrame:
    """Senator following breakdown, one row per grouping."""
    records = []
    for row in rows:
        record = _group_columns(row.group)
        record.update(
            senator_followers=row.senator_followers,
            democrat_senator_followers=row.democrat_followers,
            republican_senator_followers=row.republican_followers,
            only_democrat=row.only_democrat,
            only_republican=row.only_republican,
            both=row.both,
        )
        records.append(record)
    columns = _key_columns(level) + [
        "senator_followers",
        "democrat_senator_followers",
        "republican_senator_followers",
        "only_democrat",
        "only_republican",
        "both",
    ]
    return pd.DataFrame.from_records(records, columns=columns)


def cdr_frame(table: CdrTable) -> pd.DataFrame:
    """CDS and CDR per candidate, one row per grouping."""
    records = []
    for row in table.rows:
        record = _group_columns(row.group)
        record["cohort_size"] = row.cohort_size
        for c in table.candidates:
            record[f"cds_{c}"] = row.cds.get(c, 0.0)
        for c in table.candidates:
            record[f"cdr_{c}"] = row.cdr[c] if row.cdr else None
        records.append(record)
    columns = _key_columns(table.level) + ["cohort_size"]
    columns += [f"cds_{c}" for c in table.candidates] + [f"cdr_{c}" for c in table.candidates]
    return pd.DataFrame.from_records(records, columns=columns)


def to_csv(frame: pd.DataFrame) -> str:
    """Comma-separated, header row, LF endings, floats at full precision."""
    return frame.to_csv(index=False, lineterminator="\n", na_rep=NA)


def to_text(frame: pd.DataFrame, title: str = "") -> str:
    """Aligned table with floats rounded to three decimals."""
    formatters = {
        col: format_value for col in frame.columns if pd.api.types.is_float_dtype(frame[col])
    }
    formatters.update(
        {
            col: format_value
            for col in frame.columns
            if frame[col].dtype == object and frame[col].map(lambda v: v is None or isinstance(v, float)).all()
        }
    )
    body = frame.to_string(index=False, formatters=formatters, na_rep=NA)
    return f"{title}\n{body}\n" if title else f"{body}\n"


class ReportResult(BaseModel):
    level: Level
    format: OutputFormat
    files: list[Path] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    cdr: CdrTable


def _warnings(
    ratios: list[RatioRow], breakdowns: list[SenatorBreakdown], cdr: CdrTable
) -> list[str]:
    out = [f"following ratios undefined for {r.group.label}" for r in ratios if not r.defined]
    out += [f"senator breakdown undefined for {b.group.label}" for b in breakdowns if not b.defined]
    out += [
        f"CDR undefined for {r.group.label} (cohort size {r.cohort_size})"
        for r in cdr.rows
        if not r.defined
    ]
    return out


def emit_report(
    snapshot: Snapshot,
    out_dir: Path,
    level: Level | str = Level.STATE,
    fmt: OutputFormat | str = OutputFormat.CSV,
    threads: int = 1,
    summation: Summation = Summation.SEQUENTIAL,
) -> ReportResult:
    """Write ratios, senator_breakdown and cdr_<level> tables to ``out_dir``.

    Undefined cells are written as ``NA`` and listed in a warnings section
    (``warnings.txt`` in CSV mode, appended to each table in text mode).
    """
    level, fmt = Level(level), OutputFormat(fmt)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    candidates = snapshot.registry.candidate_handles

    ratios = run_ratios(snapshot, level)
    breakdowns = run_senator_breakdown(snapshot, level)
    cdr = run_cdr(snapshot, level=level, threads=threads, summation=summation)
    warnings = _warnings(ratios, breakdowns, cdr)

    tables = {
        "ratios": ratio_frame(ratios, candidates, level),
        "senator_breakdown": breakdown_frame(breakdowns, level),
        f"cdr_{level.value}": cdr_frame(cdr),
    }
    files = []
    for name, frame in tables.items():
        if fmt is OutputFormat.CSV:
            path = out_dir / f"{name}.csv"
            content = to_csv(frame)
        else:
            path = out_dir / f"{name}.txt"
            content = to_text(frame, title=name)
            if warnings:
                content += "\nWarnings:\n" + "".join(f"  {w}\n" for w in warnings)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        files.append(path)

    if fmt is OutputFormat.CSV and warnings:
        path = out_dir / "warnings.txt"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{w}\n" for w in warnings))
        files.append(path)

    for w in warnings:
        logger.warning(w)
    return ReportResult(level=level, format=fmt, files=files, warnings=warnings, cdr=cdr)
