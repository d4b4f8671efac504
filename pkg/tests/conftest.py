"""Shared registry and snapshot builders."""

from collections.abc import Iterable, Mapping

import numpy as np
import pytest

from fanaffinity.idset import IdSet
from fanaffinity.ingest import Snapshot
from fanaffinity.models import EntityKind, Party
from fanaffinity.registry import (
    CaucusRule,
    EntityRecord,
    Manifest,
    Registry,
    registry_from_manifest,
)

CANDIDATES = [("trump", "Republican"), ("biden", "Democrat"), ("sanders", "Democrat")]
SENATORS = [("sen_d01", "Democrat"), ("sen_r01", "Republican"), ("sen_i01", "Independent")]
TEAMS = [
    ("nba_lakers", "NBA", "CA"),
    ("nba_warriors", "NBA", "CA"),
    ("nba_rockets", "NBA", "TX"),
    ("nfl_rams", "NFL", "CA"),
    ("nfl_texans", "NFL", "TX"),
]


def build_manifest(
    teams: Iterable[tuple[str, str, str]] = TEAMS,
    senators: Iterable[tuple[str, str]] = SENATORS,
    candidates: Iterable[tuple[str, str]] = CANDIDATES,
    states: Iterable[str] = ("CA", "TX"),
    leagues: Iterable[str] = ("NBA", "NFL"),
) -> Manifest:
    entities = [
        EntityRecord(handle=h, kind=EntityKind.CANDIDATE, party=p, follower_file=f"f/{h}.txt")
        for h, p in candidates
    ]
    entities += [
        EntityRecord(handle=h, kind=EntityKind.SENATOR, party=p, follower_file=f"f/{h}.txt")
        for h, p in senators
    ]
    entities += [
        EntityRecord(
            handle=h, kind=EntityKind.TEAM, league=lg, state=st, follower_file=f"f/{h}.txt"
        )
        for h, lg, st in teams
    ]
    independents = {h: Party.DEMOCRAT for h, p in senators if p == "Independent"}
    return Manifest(
        states=list(states),
        leagues=list(leagues),
        caucus_rule=CaucusRule(independent_mapping=independents),
        entities=entities,
    )


def build_snapshot(
    follows: Mapping[str, Iterable[int]], registry: Registry | None = None
) -> Snapshot:
    """Snapshot over ``registry`` where unlisted handles have no followers."""
    registry = registry or registry_from_manifest(build_manifest())
    sets = {
        e.handle: IdSet.build(list(follows.get(e.handle, ()))) for e in registry.entities
    }
    return Snapshot(registry=registry, sets=sets)


def random_snapshot(
    rng: np.random.Generator,
    n_users: int,
    n_teams: int,
    states: tuple[str, ...] = ("CA", "NY", "TX"),
    n_dem: int = 3,
    n_rep: int = 3,
    team_rate: float = 0.3,
    senator_rate: float = 0.2,
    candidate_rate: float = 0.3,
) -> Snapshot:
    """Random instance with one league spread over ``states``."""
    teams = [(f"nba_t{i:02d}", "NBA", states[i % len(states)]) for i in range(n_teams)]
    senators = [(f"sen_d{i:02d}", "Democrat") for i in range(n_dem)]
    senators += [(f"sen_r{i:02d}", "Republican") for i in range(n_rep)]
    registry = registry_from_manifest(
        build_manifest(teams=teams, senators=senators, states=states, leagues=("NBA",))
    )
    users = np.arange(1, n_users + 1, dtype=np.uint64)
    rates = {"team": team_rate, "senator": senator_rate, "candidate": candidate_rate}
    follows = {
        e.handle: users[rng.random(n_users) < rates[e.kind.value]] for e in registry.entities
    }
    return build_snapshot(follows, registry)


@pytest.fixture
def registry() -> Registry:
    return registry_from_manifest(build_manifest())


@pytest.fixture(scope="session", autouse=True)
def compiled_set_kernels():
    """Compile the IdSet merge kernels before any hypothesis deadline applies."""
    a, b = IdSet.build([1, 2, 3]), IdSet.build([2, 3, 4])
    assert list(a & b) == [2, 3]
    assert list(a | b) == [1, 2, 3, 4]
    assert list(a - b) == [1]
