"""Pydantic models shared across the pipeline and report layers."""

from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class Party(str, Enum):
    DEMOCRAT = "Democrat"
    REPUBLICAN = "Republican"


class EntityKind(str, Enum):
    CANDIDATE = "candidate"
    SENATOR = "senator"
    TEAM = "team"


class FileFormat(str, Enum):
    TEXT = "text"
    BINARY = "binary"


class Level(str, Enum):
    SPORT = "sport"
    STATE = "state"
    TEAM = "team"


class OutputFormat(str, Enum):
    CSV = "csv"
    TEXT = "text"


class GroupKey(BaseModel):
    """Grouping key: league, plus state and team depending on the level."""

    model_config = ConfigDict(frozen=True)

    league: str
    state: str | None = None
    team: str | None = None

    @property
    def level(self) -> Level:
        if self.team is not None:
            return Level.TEAM
        if self.state is not None:
            return Level.STATE
        return Level.SPORT

    @property
    def label(self) -> str:
        return "/".join(p for p in (self.league, self.state, self.team) if p)


class Violation(BaseModel):
    """One validation problem, as reported by ``affinity validate``."""

    code: str
    message: str
    handle: str | None = None
    details: dict[str, Any] = Field(default_factory=dict)


class RatioRow(BaseModel):
    """Share of candidate follows among a grouping's fans."""

    group: GroupKey
    fans: int = 0
    engagement_rate: float | None = None
    political_interest_rate: float | None = None
    overlaps: dict[str, int] = Field(default_factory=dict)
    ratios: dict[str, float] | None = None

    @property
    def defined(self) -> bool:
        return self.ratios is not None


class SenatorBreakdown(BaseModel):
    """Partition of senator followers by which parties' senators they follow."""

    group: GroupKey
    senator_followers: int = 0
    democrat_followers: int = 0
    republican_followers: int = 0
    only_democrat: float | None = None
    only_republican: float | None = None
    both: float | None = None

    @property
    def defined(self) -> bool:
        return self.only_democrat is not None


class CdrRow(BaseModel):
    """CDS and CDR per candidate for one grouping."""

    group: GroupKey
    cohort_size: int = 0
    cds: dict[str, float] = Field(default_factory=dict)
    cdr: dict[str, float] | None = None

    @property
    def defined(self) -> bool:
        return self.cdr is not None


class CdrTable(BaseModel):
    level: Level
    candidates: list[str]
    rows: list[CdrRow] = Field(default_factory=list)

    def row(self, group: GroupKey) -> CdrRow:
        for row in self.rows:
            if row.group == group:
                return row
        raise KeyError(group.label)
