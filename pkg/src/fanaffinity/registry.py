"""Entity registry: candidates, senators and teams, loaded from a manifest.

The manifest is a JSON document (schema in docs/manifest.md). Independent
senators are resolved to one of the two parties at load time through the
manifest's caucus rule, so nothing downstream ever sees a third party.
"""

import json
import logging
from collections import Counter
from collections.abc import Iterable, Mapping
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from fanaffinity.errors import (
    DuplicateHandleError,
    IncompleteRegistryError,
    ManifestFormatError,
    MissingCaucusMappingError,
    NotASenatorError,
    SenatorIsCandidateError,
    UnknownHandleError,
    UnknownLeagueError,
    UnknownStateError,
)
from fanaffinity.models import EntityKind, FileFormat, Party

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
DIGEST_ALGORITHM = "sha256"
DEFAULT_LEAGUES = ("NBA", "NFL")
INDEPENDENT = "Independent"


class CaucusRule(BaseModel):
    """Which party each independent senator caucuses with."""

    model_config = ConfigDict(frozen=True)

    independent_mapping: dict[str, Party] = Field(default_factory=dict)


class EntityRecord(BaseModel):
    """One entity line as written in the manifest."""

    model_config = ConfigDict(extra="forbid")

    handle: str = Field(min_length=1)
    kind: EntityKind
    party: str | None = None
    league: str | None = None
    state: str | None = None
    name: str | None = None
    follower_file: str = Field(min_length=1)
    format: FileFormat = FileFormat.TEXT
    digest: str | None = None


class Manifest(BaseModel):
    """The manifest document."""

    model_config = ConfigDict(extra="forbid")

    version: int = MANIFEST_VERSION
    collected_at: str = ""
    digest_algorithm: str = DIGEST_ALGORITHM
    states: list[str]
    leagues: list[str] = Field(default_factory=lambda: list(DEFAULT_LEAGUES))
    caucus_rule: CaucusRule = Field(default_factory=CaucusRule)
    entities: list[EntityRecord] = Field(default_factory=list)

    @field_validator("states")
    @classmethod
    def _two_letter_codes(cls, states: list[str]) -> list[str]:
        bad = [s for s in states if len(s) != 2 or not s.isalpha() or not s.isupper()]
        if bad:
            raise ValueError(f"state codes must be two upper-case letters: {bad}")
        if len(set(states)) != len(states):
            raise ValueError("state codes must be unique")
        return states


class Entity(BaseModel):
    """A followed account with its role."""

    model_config = ConfigDict(frozen=True)

    handle: str
    kind: EntityKind
    party: Party | None = None
    independent: bool = False
    league: str | None = None
    state: str | None = None
    name: str | None = None
    follower_file: str
    format: FileFormat = FileFormat.TEXT
    digest: str | None = None

    @property
    def is_candidate(self) -> bool:
        return self.kind is EntityKind.CANDIDATE

    @property
    def is_senator(self) -> bool:
        return self.kind is EntityKind.SENATOR

    @property
    def is_team(self) -> bool:
        return self.kind is EntityKind.TEAM

    def to_record(self) -> EntityRecord:
        party = None
        if self.independent:
            party = INDEPENDENT
        elif self.party is not None:
            party = self.party.value
        return EntityRecord(
            handle=self.handle,
            kind=self.kind,
            party=party,
            league=self.league,
            state=self.state,
            name=self.name,
            follower_file=self.follower_file,
            format=self.format,
            digest=self.digest,
        )


class Registry(BaseModel):
    """Validated, immutable entity universe."""

    model_config = ConfigDict(frozen=True)

    entities: tuple[Entity, ...]
    states: tuple[str, ...]
    leagues: tuple[str, ...] = DEFAULT_LEAGUES
    caucus_rule: CaucusRule = Field(default_factory=CaucusRule)
    collected_at: str = ""
    digest_algorithm: str = DIGEST_ALGORITHM

    def get(self, handle: str) -> Entity:
        for entity in self.entities:
            if entity.handle == handle:
                return entity
        raise UnknownHandleError(f"no entity with handle '{handle}'", handle=handle)

    @property
    def candidates(self) -> list[Entity]:
        """Candidates in manifest order (the column order of every report)."""
        return [e for e in self.entities if e.is_candidate]

    @property
    def senators(self) -> list[Entity]:
        return [e for e in self.entities if e.is_senator]

    @property
    def teams(self) -> list[Entity]:
        return [e for e in self.entities if e.is_team]

    @property
    def candidate_handles(self) -> list[str]:
        return [e.handle for e in self.candidates]

    def candidate_parties(self) -> dict[str, Party]:
        return {e.handle: e.party for e in self.candidates if e.party is not None}

    def senators_of(self, party: Party) -> list[Entity]:
        """Senators counted toward ``party`` after caucus resolution."""
        return [e for e in self.senators if e.party is party]

    def teams_by(self, league: str, state: str | None = None) -> list[Entity]:
        """Teams of ``league`` (and ``state`` if given), sorted by handle."""
        if league not in self.leagues:
            raise UnknownLeagueError(f"unknown league '{league}'", league=league)
        if state is not None and state not in self.states:
            raise UnknownStateError(f"unknown state '{state}'", state=state)
        teams = [
            e
            for e in self.teams
            if e.league == league and (state is None or e.state == state)
        ]
        return sorted(teams, key=lambda e: e.handle)

    def states_of(self, league: str) -> list[str]:
        """Sorted states that have at least one team in ``league``."""
        return sorted({e.state for e in self.teams_by(league) if e.state})

    def active_leagues(self) -> list[str]:
        """Declared leagues that have at least one team, in declared order."""
        return [lg for lg in self.leagues if any(e.league == lg for e in self.teams)]

    def senator_party(self, handle: str) -> Party:
        entity = self.get(handle)
        if not entity.is_senator or entity.party is None:
            raise NotASenatorError(
                f"'{handle}' is a {entity.kind.value}, not a senator", handle=handle
            )
        return entity.party

    def require_runnable(self) -> None:
        """A pipeline run needs at least one candidate, senator and team."""
        missing = [
            kind.value
            for kind in EntityKind
            if not any(e.kind is kind for e in self.entities)
        ]
        if missing:
            raise IncompleteRegistryError(
                f"registry has no {', '.join(missing)} entities", missing=missing
            )

    def with_digests(self, digests: Mapping[str, str]) -> "Registry":
        """Copy of the registry with follower-file digests filled in."""
        entities = tuple(
            e.model_copy(update={"digest": digests[e.handle]})
            if e.handle in digests
            else e
            for e in self.entities
        )
        return self.model_copy(update={"entities": entities})

    def with_files(self, files: Mapping[str, tuple[str, FileFormat]]) -> "Registry":
        """Copy with follower file paths and formats replaced per handle."""
        entities = tuple(
            e.model_copy(
                update={
                    "follower_file": files[e.handle][0],
                    "format": files[e.handle][1],
                    "digest": None,
                }
            )
            if e.handle in files
            else e
            for e in self.entities
        )
        return self.model_copy(update={"entities": entities})

    def to_manifest(self) -> Manifest:
        return Manifest(
            collected_at=self.collected_at,
            digest_algorithm=self.digest_algorithm,
            states=list(self.states),
            leagues=list(self.leagues),
            caucus_rule=self.caucus_rule,
            entities=[e.to_record() for e in self.entities],
        )


def _check_handles(records: list[EntityRecord]) -> None:
    kinds: dict[str, set[EntityKind]] = {}
    for record in records:
        kinds.setdefault(record.handle, set()).add(record.kind)
    for handle, seen in kinds.items():
        if {EntityKind.SENATOR, EntityKind.CANDIDATE} <= seen:
            raise SenatorIsCandidateError(
                f"'{handle}' is listed both as senator and as candidate",
                handle=handle,
            )
    counts = Counter(r.handle for r in records)
    duplicates = sorted(h for h, n in counts.items() if n > 1)
    if duplicates:
        raise DuplicateHandleError(
            f"duplicate handle(s): {', '.join(duplicates)}", handles=duplicates
        )


def _parse_party(record: EntityRecord, allowed: Iterable[str]) -> str:
    if record.party not in allowed:
        raise ManifestFormatError(
            f"{record.kind.value} '{record.handle}' has party {record.party!r}; "
            f"expected one of {sorted(allowed)}",
            handle=record.handle,
        )
    return record.party


def _resolve(record: EntityRecord, manifest: Manifest) -> Entity:
    fields = {
        "handle": record.handle,
        "kind": record.kind,
        "name": record.name,
        "follower_file": record.follower_file,
        "format": record.format,
        "digest": record.digest,
    }
    two_parties = {p.value for p in Party}

    if record.kind is EntityKind.CANDIDATE:
        return Entity(**fields, party=Party(_parse_party(record, two_parties)))

    if record.kind is EntityKind.SENATOR:
        declared = _parse_party(record, two_parties | {INDEPENDENT})
        if declared != INDEPENDENT:
            return Entity(**fields, party=Party(declared))
        mapping = manifest.caucus_rule.independent_mapping
        if record.handle not in mapping:
            raise MissingCaucusMappingError(
                f"independent senator '{record.handle}' has no caucus mapping",
                handle=record.handle,
            )
        return Entity(**fields, party=mapping[record.handle], independent=True)

    if not record.league or not record.state:
        raise ManifestFormatError(
            f"team '{record.handle}' needs both league and state",
            handle=record.handle,
        )
    if record.league not in manifest.leagues:
        raise UnknownLeagueError(
            f"team '{record.handle}' has unknown league '{record.league}'",
            handle=record.handle,
            league=record.league,
        )
    if record.state not in manifest.states:
        raise UnknownStateError(
            f"team '{record.handle}' has state '{record.state}' outside the state list",
            handle=record.handle,
            state=record.state,
        )
    return Entity(**fields, league=record.league, state=record.state)


def registry_from_manifest(manifest: Manifest) -> Registry:
    """Validate a parsed manifest into a registry."""
    _check_handles(manifest.entities)
    entities = tuple(_resolve(r, manifest) for r in manifest.entities)
    registry = Registry(
        entities=entities,
        states=tuple(manifest.states),
        leagues=tuple(manifest.leagues),
        caucus_rule=manifest.caucus_rule,
        collected_at=manifest.collected_at,
        digest_algorithm=manifest.digest_algorithm,
    )
    logger.debug(
        "Loaded registry: %d candidates, %d senators, %d teams",
        len(registry.candidates),
        len(registry.senators),
        len(registry.teams),
    )
    return registry


def load_registry(config_text: str) -> Registry:
    """Parse and validate a manifest document.

    Raises:
        ManifestFormatError: The document is not a well-formed manifest.
        DuplicateHandleError, UnknownLeagueError, UnknownStateError,
        SenatorIsCandidateError, MissingCaucusMappingError: Registry rules.
    """
    try:
        manifest = Manifest.model_validate_json(config_text)
    except ValidationError as e:
        raise ManifestFormatError(
            f"invalid manifest: {e.error_count()} error(s)",
            errors=[
                {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
                for err in e.errors()
            ],
        ) from e
    return registry_from_manifest(manifest)


def load_registry_file(path: Path) -> Registry:
    return load_registry(Path(path).read_text(encoding="utf-8"))


def dump_manifest(registry: Registry) -> str:
    """Serialize a registry back to manifest JSON."""
    data = registry.to_manifest().model_dump(mode="json")
    return json.dumps(data, indent=2) + "\n"


def save_manifest(registry: Registry, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_manifest(registry), encoding="utf-8")
    return path


# Bundled six-state team roster: (league, state, franchise).
ROSTER_TEAMS: tuple[tuple[str, str, str], ...] = (
    ("NBA", "NY", "Nets"),
    ("NBA", "NY", "Knicks"),
    ("NFL", "NY", "Bills"),
    ("NFL", "NY", "Jets"),
    ("NFL", "NY", "Giants"),
    ("NBA", "CA", "Warriors"),
    ("NBA", "CA", "Clippers"),
    ("NBA", "CA", "Lakers"),
    ("NBA", "CA", "Kings"),
    ("NFL", "CA", "Rams"),
    ("NFL", "CA", "Chargers"),
    ("NFL", "CA", "Raiders"),
    ("NFL", "CA", "49ers"),
    ("NBA", "OH", "Cavaliers"),
    ("NFL", "OH", "Browns"),
    ("NFL", "OH", "Bengals"),
    ("NBA", "FL", "Heat"),
    ("NBA", "FL", "Magic"),
    ("NFL", "FL", "Jaguars"),
    ("NFL", "FL", "Dolphins"),
    ("NFL", "FL", "Buccaneers"),
    ("NBA", "TX", "Mavericks"),
    ("NBA", "TX", "Rockets"),
    ("NBA", "TX", "Spurs"),
    ("NFL", "TX", "Cowboys"),
    ("NFL", "TX", "Texans"),
    ("NBA", "GA", "Hawks"),
    ("NFL", "GA", "Falcons"),
)
ROSTER_STATES = ("NY", "CA", "OH", "FL", "TX", "GA")
ROSTER_CANDIDATES: tuple[tuple[str, Party], ...] = (
    ("trump", Party.REPUBLICAN),
    ("biden", Party.DEMOCRAT),
    ("sanders", Party.DEMOCRAT),
)
# 116th Senate: 53 R, 45 D, 2 I caucusing with D.
ROSTER_SENATE = {"Republican": 53, "Democrat": 45, INDEPENDENT: 2}


def team_handle(league: str, name: str) -> str:
    return f"{league.lower()}_{name.lower().replace(' ', '_')}"


def senator_handles(composition: Mapping[str, int]) -> list[tuple[str, str]]:
    """Placeholder senator handles ``sen_<party initial><nn>`` with their party."""
    out = []
    for party, count in composition.items():
        prefix = party[0].lower()
        out.extend((f"sen_{prefix}{i:02d}", party) for i in range(1, count + 1))
    return out


def roster_manifest(
    follower_dir: str = "followers",
    file_format: FileFormat = FileFormat.TEXT,
    states: Iterable[str] = ROSTER_STATES,
    teams: Iterable[tuple[str, str, str]] = ROSTER_TEAMS,
    candidates: Iterable[tuple[str, Party]] = ROSTER_CANDIDATES,
    senate: Mapping[str, int] = ROSTER_SENATE,
    collected_at: str = "",
) -> Manifest:
    """Manifest of the six-state roster with placeholder follower paths."""
    suffix = "txt" if file_format is FileFormat.TEXT else "ids"
    states = list(states)

    def record(handle: str, kind: EntityKind, **extra) -> EntityRecord:
        return EntityRecord(
            handle=handle,
            kind=kind,
            follower_file=f"{follower_dir}/{handle}.{suffix}",
            format=file_format,
            **extra,
        )

    entities = [
        record(handle, EntityKind.CANDIDATE, party=party.value)
        for handle, party in candidates
    ]
    senators = senator_handles(senate)
    entities += [record(h, EntityKind.SENATOR, party=p) for h, p in senators]
    entities += [
        record(team_handle(league, name), EntityKind.TEAM, league=league, state=state, name=name)
        for league, state, name in teams
        if state in states
    ]
    caucus = CaucusRule(
        independent_mapping={h: Party.DEMOCRAT for h, p in senators if p == INDEPENDENT}
    )
    return Manifest(
        collected_at=collected_at,
        states=states,
        caucus_rule=caucus,
        entities=entities,
    )
