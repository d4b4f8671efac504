"""Run configuration and logging setup for the CLI."""

import logging
import os
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field, field_validator

from fanaffinity.ingest import DEFAULT_MALFORMED_THRESHOLD
from fanaffinity.metrics import Summation
from fanaffinity.models import Level, OutputFormat

LOG_ENV = "AFFINITY_LOG"
DEFAULT_LOG_LEVEL = "WARNING"


class Subcommand(str, Enum):
    VALIDATE = "validate"
    SYNTH = "synth"
    COLLECT = "collect"
    REPORT = "report"


class RunConfig(BaseModel):
    """Everything one CLI invocation needs."""

    subcommand: Subcommand
    manifest: Path | None = None
    out: Path | None = None
    level: Level = Level.STATE
    format: OutputFormat = OutputFormat.CSV
    threads: int = Field(default=1, ge=1)
    seed: int | None = Field(default=None, ge=0)
    malformed_threshold: float = Field(default=DEFAULT_MALFORMED_THRESHOLD, ge=0.0, le=1.0)
    summation: Summation = Summation.SEQUENTIAL
    track: bool = False
    experiment: str | None = None

    @field_validator("out")
    @classmethod
    def _writable(cls, out: Path | None) -> Path | None:
        if out is None:
            return None
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ValueError(f"output directory {out} is not writable")
        return out


def configure_logging() -> None:
    """Send log records to stderr at the level named by ``AFFINITY_LOG``."""
    name = os.environ.get(LOG_ENV, DEFAULT_LOG_LEVEL).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("fanaffinity").setLevel(level)
