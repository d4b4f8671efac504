"""Filters, following ratios, senator breakdowns and CDR aggregation.

Cohorts are built per team: exclusive fans of the team (within its league)
who follow at least one senator and at least one candidate. Exclusive fans
of different teams in one league are disjoint, so state and sport groupings
are combined from team shards in sorted order. That fixed combine order makes
team -> state -> sport CDS additive exactly.
"""

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from fanaffinity.errors import EmptyCohortError, UndefinedRowError
from fanaffinity.idset import IdSet, member_mask, multi_way_membership_counts, union_all
from fanaffinity.ingest import Snapshot
from fanaffinity.metrics import DevotednessScores, Summation, batch_cds, combine_scores
from fanaffinity.models import (
    CdrRow,
    CdrTable,
    GroupKey,
    Level,
    Party,
    RatioRow,
    SenatorBreakdown,
)
from fanaffinity.registry import Entity, Registry

logger = logging.getLogger(__name__)

# Cohorts at least this large must count senator follows set by set.
INVERTED_ORIENTATION_THRESHOLD = 10**6


class Orientation(str, Enum):
    AUTO = "auto"
    PER_USER = "per_user"
    PER_SENATOR = "per_senator"


def exclusive_fans(snapshot: Snapshot, league: str) -> dict[str, IdSet]:
    """Followers of exactly one team of ``league``, per team handle."""
    teams = snapshot.registry.teams_by(league)
    counts = multi_way_membership_counts([snapshot.followers(t.handle) for t in teams])
    multi = IdSet(counts.ids[counts.counts > 1])
    return {t.handle: snapshot.followers(t.handle).difference(multi) for t in teams}


def politically_interested(
    fans: IdSet, snapshot: Snapshot, senator_union: IdSet | None = None
) -> IdSet:
    """Fans following at least one senator."""
    if senator_union is None:
        senator_union = snapshot.senator_union()
    return fans.intersect(senator_union)


def engagement_rate(fans: IdSet, candidates: Sequence[IdSet]) -> float:
    """Share of ``fans`` following at least one candidate."""
    if len(fans) == 0:
        raise EmptyCohortError("engagement rate of an empty fan set is undefined")
    return len(fans.intersect(union_all(candidates))) / len(fans)


def following_ratios(
    fans: IdSet,
    candidate_sets: Mapping[str, IdSet],
    group: GroupKey | None = None,
) -> RatioRow:
    """Each candidate's share of all candidate overlaps among ``fans``.

    A fan following m candidates counts once in each of m numerators.

    Raises:
        UndefinedRowError: No fan follows any candidate.
    """
    overlaps = {c: len(fans.intersect(s)) for c, s in candidate_sets.items()}
    total = sum(overlaps.values())
    if total == 0:
        raise UndefinedRowError(
            "no fan follows any candidate", group=group.label if group else None
        )
    return RatioRow(
        group=group or GroupKey(league=""),
        fans=len(fans),
        overlaps=overlaps,
        ratios={c: n / total for c, n in overlaps.items()},
    )


class _PoliticalIndex:
    """Unions and per-party senator arrays computed once per run."""

    def __init__(self, snapshot: Snapshot):
        registry = snapshot.registry
        self.snapshot = snapshot
        self.senator_union = snapshot.senator_union()
        self.dem_union = snapshot.party_senator_union(Party.DEMOCRAT)
        self.rep_union = snapshot.party_senator_union(Party.REPUBLICAN)
        self.candidate_union = snapshot.candidate_union()
        self.candidates = registry.candidate_handles
        self.candidate_parties = registry.candidate_parties()
        self.dem_senators = [snapshot.followers(e.handle) for e in registry.senators_of(Party.DEMOCRAT)]
        self.rep_senators = [snapshot.followers(e.handle) for e in registry.senators_of(Party.REPUBLICAN)]


def senator_breakdown(
    fans: IdSet,
    snapshot: Snapshot,
    registry: Registry | None = None,
    group: GroupKey | None = None,
    index: _PoliticalIndex | None = None,
) -> SenatorBreakdown:
    """Split senator-following fans into only-D, only-R and both.

    Raises:
        UndefinedRowError: No fan follows a senator.
    """
    if index is None:
        if registry is not None and registry is not snapshot.registry:
            snapshot = snapshot.model_copy(update={"registry": registry})
        index = _PoliticalIndex(snapshot)
    followers = fans.intersect(index.senator_union).to_numpy()
    if followers.size == 0:
        raise UndefinedRowError(
            "no fan follows a senator", group=group.label if group else None
        )
    dem = member_mask(followers, index.dem_union.to_numpy())
    rep = member_mask(followers, index.rep_union.to_numpy())
    n = followers.size
    return SenatorBreakdown(
        group=group or GroupKey(league=""),
        senator_followers=int(n),
        democrat_followers=int(np.sum(dem)),
        republican_followers=int(np.sum(rep)),
        only_democrat=int(np.sum(dem & ~rep)) / n,
        only_republican=int(np.sum(rep & ~dem)) / n,
        both=int(np.sum(dem & rep)) / n,
    )


def party_follow_counts(
    members: IdSet,
    dem_senators: Sequence[IdSet],
    rep_senators: Sequence[IdSet],
    orientation: Orientation = Orientation.AUTO,
) -> tuple[np.ndarray, np.ndarray]:
    """(alpha, beta) per member, aligned with ``members`` ascending order.

    ``PER_USER`` tests every member against every senator set (a users x
    senators membership matrix). ``PER_SENATOR`` walks each senator's
    followers and increments the counter of each one found among the members.
    Both give the same counts; ``AUTO`` walks senators once the cohort reaches
    ``INVERTED_ORIENTATION_THRESHOLD`` users.
    """
    ids = members.to_numpy()
    orientation = Orientation(orientation)
    if orientation is Orientation.AUTO:
        orientation = (
            Orientation.PER_SENATOR
            if ids.size >= INVERTED_ORIENTATION_THRESHOLD
            else Orientation.PER_USER
        )

    if orientation is Orientation.PER_SENATOR:
        alpha = np.zeros(ids.size, dtype=np.int64)
        beta = np.zeros(ids.size, dtype=np.int64)
        for senators, counter in ((dem_senators, alpha), (rep_senators, beta)):
            for senator in senators:
                followers = senator.to_numpy()
                found = member_mask(followers, ids)
                # senator sets are unique, so positions never repeat
                counter[np.searchsorted(ids, followers[found])] += 1
        return alpha, beta

    def count(senators: Sequence[IdSet]) -> np.ndarray:
        if not senators:
            return np.zeros(ids.size, dtype=np.int64)
        matrix = np.column_stack([s.contains_many(ids) for s in senators])
        return matrix.sum(axis=1, dtype=np.int64)

    return count(dem_senators), count(rep_senators)


def _team_scores(
    members: IdSet,
    index: _PoliticalIndex,
    orientation: Orientation,
    summation: Summation,
) -> DevotednessScores:
    if len(members) == 0:
        return DevotednessScores(scores={c: 0.0 for c in index.candidates}, user_count=0)
    alpha, beta = party_follow_counts(
        members, index.dem_senators, index.rep_senators, orientation
    )
    ids = members.to_numpy()
    sigma = np.column_stack(
        [index.snapshot.followers(c).contains_many(ids) for c in index.candidates]
    )
    return batch_cds(alpha, beta, sigma, index.candidates, index.candidate_parties, summation)


def _cdr_row(group: GroupKey, scores: DevotednessScores, candidates: Sequence[str]) -> CdrRow:
    total = 0.0
    for c in candidates:
        total += scores.scores[c]
    cdr = None
    if scores.user_count > 0 and total > 0:
        cdr = {c: scores.scores[c] / total for c in candidates}
    else:
        logger.warning("CDR undefined for %s (cohort size %d)", group.label, scores.user_count)
    return CdrRow(group=group, cohort_size=scores.user_count, cds=dict(scores.scores), cdr=cdr)


def cdr_cohorts(snapshot: Snapshot, league: str, index: _PoliticalIndex) -> dict[str, IdSet]:
    """Team handle -> eligible members (exclusive, senator and candidate followers)."""
    eligible = index.senator_union.intersect(index.candidate_union)
    return {
        team: fans.intersect(eligible)
        for team, fans in exclusive_fans(snapshot, league).items()
    }


def run_cdr(
    snapshot: Snapshot,
    registry: Registry | None = None,
    level: Level | str = Level.STATE,
    threads: int = 1,
    orientation: Orientation = Orientation.AUTO,
    summation: Summation = Summation.SEQUENTIAL,
) -> CdrTable:
    """CDS and CDR for every grouping at ``level``.

    Rows are ordered by league (declared order), then state, then team handle;
    candidate columns follow registry order. Groupings without eligible members
    get a row with cohort size 0 and no CDR.
    """
    level = Level(level)
    if registry is not None and registry is not snapshot.registry:
        snapshot = snapshot.model_copy(update={"registry": registry})
    registry = snapshot.registry
    registry.require_runnable()
    index = _PoliticalIndex(snapshot)
    candidates = index.candidates

    jobs: list[tuple[Entity, IdSet]] = []
    for league in registry.active_leagues():
        cohorts = cdr_cohorts(snapshot, league, index)
        for state in registry.states_of(league):
            for team in registry.teams_by(league, state):
                jobs.append((team, cohorts[team.handle]))

    def score(job: tuple[Entity, IdSet]) -> DevotednessScores:
        return _team_scores(job[1], index, orientation, summation)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            team_scores = list(pool.map(score, jobs))
    else:
        team_scores = [score(job) for job in jobs]

    rows: list[CdrRow] = []
    by_team = {team.handle: s for (team, _), s in zip(jobs, team_scores)}
    for league in registry.active_leagues():
        state_scores = []
        for state in registry.states_of(league):
            teams = registry.teams_by(league, state)
            shards = [by_team[t.handle] for t in teams]
            if level is Level.TEAM:
                rows.extend(
                    _cdr_row(GroupKey(league=league, state=state, team=t.handle), s, candidates)
                    for t, s in zip(teams, shards)
                )
            state_scores.append((state, combine_scores(shards, candidates)))
        if level is Level.STATE:
            rows.extend(
                _cdr_row(GroupKey(league=league, state=state), s, candidates)
                for state, s in state_scores
            )
        elif level is Level.SPORT:
            sport = combine_scores([s for _, s in state_scores], candidates)
            rows.append(_cdr_row(GroupKey(league=league), sport, candidates))

    logger.info("Computed %d %s-level CDR rows", len(rows), level.value)
    return CdrTable(level=level, candidates=list(candidates), rows=rows)


def grouped_fans(snapshot: Snapshot, level: Level | str) -> list[tuple[GroupKey, IdSet]]:
    """Exclusive fans pooled per grouping at ``level``, in report order."""
    level = Level(level)
    registry = snapshot.registry
    out = []
    for league in registry.active_leagues():
        exclusive = exclusive_fans(snapshot, league)
        states = registry.states_of(league)
        if level is Level.SPORT:
            out.append((GroupKey(league=league), union_all(exclusive.values())))
            continue
        for state in states:
            teams = registry.teams_by(league, state)
            if level is Level.STATE:
                out.append(
                    (
                        GroupKey(league=league, state=state),
                        union_all(exclusive[t.handle] for t in teams),
                    )
                )
            else:
                out.extend(
                    (GroupKey(league=league, state=state, team=t.handle), exclusive[t.handle])
                    for t in teams
                )
    return out


def run_ratios(snapshot: Snapshot, level: Level | str = Level.STATE) -> list[RatioRow]:
    """Candidate following ratios with engagement and political-interest rates."""
    candidate_sets = snapshot.candidate_sets()
    candidate_union = snapshot.candidate_union()
    senator_union = snapshot.senator_union()
    rows = []
    for group, fans in grouped_fans(snapshot, level):
        engaged = interested = None
        if len(fans):
            engaged = engagement_rate(fans, [candidate_union])
            interested = len(politically_interested(fans, snapshot, senator_union)) / len(fans)
        try:
            row = following_ratios(fans, candidate_sets, group)
        except UndefinedRowError:
            logger.warning("Following ratios undefined for %s", group.label)
            row = RatioRow(
                group=group,
                fans=len(fans),
                overlaps={c: 0 for c in candidate_sets},
            )
        rows.append(
            row.model_copy(
                update={"engagement_rate": engaged, "political_interest_rate": interested}
            )
        )
    return rows


def run_senator_breakdown(
    snapshot: Snapshot, level: Level | str = Level.SPORT
) -> list[SenatorBreakdown]:
    index = _PoliticalIndex(snapshot)
    rows = []
    for group, fans in grouped_fans(snapshot, level):
        try:
            rows.append(senator_breakdown(fans, snapshot, group=group, index=index))
        except UndefinedRowError:
            logger.warning("Senator breakdown undefined for %s", group.label)
            rows.append(SenatorBreakdown(group=group))
    return rows
