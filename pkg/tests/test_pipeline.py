"""Tests for cohort filters, ratio tables and CDR aggregation."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import build_manifest, build_snapshot, random_snapshot
from fanaffinity.errors import EmptyCohortError, UndefinedRowError
from fanaffinity.idset import IdSet, build
from fanaffinity.models import GroupKey, Level, Party
from fanaffinity.pipeline import (
    Orientation,
    engagement_rate,
    exclusive_fans,
    following_ratios,
    party_follow_counts,
    politically_interested,
    run_cdr,
    run_ratios,
    run_senator_breakdown,
    senator_breakdown,
)
from fanaffinity.registry import registry_from_manifest
from fanaffinity.synth import StateSpec, SynthConfig, simulate

small_ids = st.sets(st.integers(min_value=1, max_value=500), max_size=120)


def naive_cdr(snapshot, level: Level) -> dict[GroupKey, tuple[int, dict[str, float]]]:
    """Per-user loop over plain Python sets.

    Teams sum their users in ascending ID order, states sum their teams in
    handle order and leagues sum their states in sorted order.
    """
    registry = snapshot.registry
    sets = {h: set(s) for h, s in snapshot.sets.items()}
    dem = [sets[s.handle] for s in registry.senators_of(Party.DEMOCRAT)]
    rep = [sets[s.handle] for s in registry.senators_of(Party.REPUBLICAN)]
    candidates = registry.candidate_handles
    parties = registry.candidate_parties()

    def team_cds(members):
        cds = {c: 0.0 for c in candidates}
        users = 0
        for u in sorted(members):
            alpha = sum(u in s for s in dem)
            beta = sum(u in s for s in rep)
            followed = [c for c in candidates if u in sets[c]]
            if alpha + beta == 0 or not followed:
                continue
            users += 1
            for c in candidates:
                sigma = 1 if c in followed else 0
                if parties[c] is Party.DEMOCRAT:
                    weight = alpha / (alpha + beta)
                else:
                    weight = beta / (alpha + beta)
                cds[c] += weight * sigma / len(followed)
        return users, cds

    def add(parts):
        total = {c: 0.0 for c in candidates}
        users = 0
        for n, cds in parts:
            users += n
            for c in candidates:
                total[c] += cds[c]
        return users, total

    out = {}
    for league in registry.active_leagues():
        teams = registry.teams_by(league)
        per_user = {}
        for t in teams:
            for u in sets[t.handle]:
                per_user[u] = per_user.get(u, 0) + 1
        state_parts = []
        for state in sorted({t.state for t in teams}):
            team_parts = []
            for t in sorted((t for t in teams if t.state == state), key=lambda t: t.handle):
                exclusive = {u for u in sets[t.handle] if per_user[u] == 1}
                part = team_cds(exclusive)
                team_parts.append(part)
                out[GroupKey(league=league, state=state, team=t.handle)] = part
            state_part = add(team_parts)
            state_parts.append(state_part)
            out[GroupKey(league=league, state=state)] = state_part
        out[GroupKey(league=league)] = add(state_parts)
    return {k: v for k, v in out.items() if k.level is level}


def assert_cds_additive(snapshot) -> None:
    """Team CDS add up to state CDS, and state CDS to sport CDS, bit for bit."""
    teams = run_cdr(snapshot, level=Level.TEAM)
    states = run_cdr(snapshot, level=Level.STATE)
    sports = run_cdr(snapshot, level=Level.SPORT)
    for sport_row in sports.rows:
        league = sport_row.group.league
        league_total = {c: 0.0 for c in sports.candidates}
        league_users = 0
        for state_row in states.rows:
            if state_row.group.league != league:
                continue
            total = {c: 0.0 for c in states.candidates}
            for team_row in teams.rows:
                if team_row.group.league == league and team_row.group.state == state_row.group.state:
                    for c in total:
                        total[c] += team_row.cds[c]
            assert state_row.cds == total
            for c in league_total:
                league_total[c] += state_row.cds[c]
            league_users += state_row.cohort_size
        assert sport_row.cds == league_total
        assert sport_row.cohort_size == league_users


class TestExclusiveFans:
    def test_multi_team_follower_removed(self):
        snapshot = build_snapshot({"nba_lakers": [1, 2], "nba_rockets": [2, 3]})
        fans = exclusive_fans(snapshot, "NBA")
        assert list(fans["nba_lakers"]) == [1]
        assert list(fans["nba_rockets"]) == [3]

    def test_other_league_does_not_count(self):
        snapshot = build_snapshot({"nba_lakers": [1, 2], "nfl_rams": [2]})
        assert list(exclusive_fans(snapshot, "NBA")["nba_lakers"]) == [1, 2]

    def test_single_team_league_unchanged(self):
        manifest = build_manifest(teams=[("nba_lakers", "NBA", "CA")])
        snapshot = build_snapshot({"nba_lakers": [4, 5]}, registry_from_manifest(manifest))
        assert list(exclusive_fans(snapshot, "NBA")["nba_lakers"]) == [4, 5]

    @given(st.lists(small_ids, min_size=3, max_size=3))
    def test_matches_naive_count_filter(self, teams):
        handles = ["nba_lakers", "nba_warriors", "nba_rockets"]
        snapshot = build_snapshot(dict(zip(handles, teams)))
        fans = exclusive_fans(snapshot, "NBA")
        for handle, followers in zip(handles, teams):
            expected = {u for u in followers if sum(u in t for t in teams) == 1}
            assert list(fans[handle]) == sorted(expected)

    def test_randomized_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            snapshot = random_snapshot(rng, n_users=int(rng.integers(1, 500)), n_teams=int(rng.integers(1, 9)))
            teams = [set(snapshot.followers(t.handle)) for t in snapshot.registry.teams]
            fans = exclusive_fans(snapshot, "NBA")
            for entity, followers in zip(snapshot.registry.teams, teams):
                expected = {u for u in followers if sum(u in t for t in teams) == 1}
                assert set(fans[entity.handle]) == expected


class TestPoliticallyInterested:
    def test_keeps_senator_followers(self):
        snapshot = build_snapshot({"sen_d01": [2], "sen_r01": [4]})
        assert list(politically_interested(build([1, 2, 3]), snapshot)) == [2]

    def test_no_senator_followers(self):
        snapshot = build_snapshot({})
        assert len(politically_interested(build([1, 2, 3]), snapshot)) == 0

    def test_filter_order_does_not_matter(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            snapshot = random_snapshot(
                rng, n_users=int(rng.integers(50, 800)), n_teams=int(rng.integers(2, 8))
            )
            senators = snapshot.senator_union()
            exclusive_first = {
                team: politically_interested(fans, snapshot)
                for team, fans in exclusive_fans(snapshot, "NBA").items()
            }
            narrowed = dict(snapshot.sets)
            for team in snapshot.registry.teams:
                narrowed[team.handle] = snapshot.followers(team.handle) & senators
            senators_first = exclusive_fans(snapshot.model_copy(update={"sets": narrowed}), "NBA")
            assert senators_first == exclusive_first

    @given(small_ids, small_ids, small_ids)
    def test_matches_membership_scan(self, fans, dem, rep):
        snapshot = build_snapshot({"sen_d01": dem, "sen_r01": rep})
        result = politically_interested(build(fans), snapshot)
        assert list(result) == sorted(u for u in fans if u in dem or u in rep)


class TestEngagementRate:
    def test_partial(self):
        assert engagement_rate(build(range(1, 11)), [build([1, 2])]) == 0.2

    def test_disjoint(self):
        assert engagement_rate(build([1, 2]), [build([3])]) == 0.0

    def test_all_engaged(self):
        assert engagement_rate(build([1, 2]), [build([1]), build([2, 3])]) == 1.0

    def test_empty_fans(self):
        with pytest.raises(EmptyCohortError):
            engagement_rate(IdSet.empty(), [build([1])])


class TestFollowingRatios:
    def test_normalised_by_total_overlaps(self):
        fans = build(range(2000))
        candidate_sets = {
            "trump": build(range(647)),
            "sanders": build(range(1000, 1222)),
            "biden": build(range(1500, 1632)),
        }
        row = following_ratios(fans, candidate_sets)
        assert row.overlaps == {"trump": 647, "sanders": 222, "biden": 132}
        assert row.ratios["trump"] == 647 / 1001
        assert row.ratios["sanders"] == pytest.approx(0.2218, abs=1e-4)
        assert row.ratios["biden"] == pytest.approx(0.1319, abs=1e-4)

    def test_zero_share(self):
        fans = build(range(20))
        row = following_ratios(
            fans, {"trump": build(range(5)), "sanders": IdSet.empty(), "biden": build(range(5, 10))}
        )
        assert row.ratios == {"trump": 0.5, "sanders": 0.0, "biden": 0.5}

    def test_multi_candidate_followers_count_for_each(self):
        row = following_ratios(build([1]), {"trump": build([1]), "biden": build([1])})
        assert row.ratios == {"trump": 0.5, "biden": 0.5}

    def test_no_overlap(self):
        with pytest.raises(UndefinedRowError):
            following_ratios(build([1, 2]), {"trump": build([3])})


class TestSenatorBreakdown:
    def test_buckets(self):
        snapshot = build_snapshot({"sen_d01": [1, 2], "sen_r01": [2, 3], "sen_i01": [4]})
        row = senator_breakdown(build([1, 2, 3, 4, 5]), snapshot)
        assert row.senator_followers == 4
        assert row.only_democrat == 0.5
        assert row.only_republican == 0.25
        assert row.both == 0.25
        assert row.democrat_followers == 3
        assert row.republican_followers == 2

    def test_no_senator_followers(self):
        snapshot = build_snapshot({"sen_d01": [9]})
        with pytest.raises(UndefinedRowError):
            senator_breakdown(build([1]), snapshot)


class TestPartyFollowCounts:
    def test_orientations_agree(self):
        rng = np.random.default_rng(5)
        members = IdSet.build(rng.integers(0, 10**6, 3000))
        dem = [IdSet.build(rng.integers(0, 10**6, 4000)) for _ in range(7)]
        rep = [IdSet.build(rng.integers(0, 10**6, 4000)) for _ in range(5)]
        dem.append(members)
        per_user = party_follow_counts(members, dem, rep, Orientation.PER_USER)
        per_senator = party_follow_counts(members, dem, rep, Orientation.PER_SENATOR)
        np.testing.assert_array_equal(per_user[0], per_senator[0])
        np.testing.assert_array_equal(per_user[1], per_senator[1])
        assert per_user[0].min() >= 1

    def test_no_senators_of_a_party(self):
        alpha, beta = party_follow_counts(build([1, 2]), [build([2])], [], Orientation.PER_USER)
        assert alpha.tolist() == [0, 1]
        assert beta.tolist() == [0, 0]


class TestRunCdr:
    def test_hand_enumerated_cohort(self):
        # user 10: one Democrat senator, Biden. user 20: one of each, Trump and Biden.
        snapshot = build_snapshot(
            {
                "nba_lakers": [10, 20],
                "sen_d01": [10, 20],
                "sen_r01": [20],
                "biden": [10, 20],
                "trump": [20],
            }
        )
        table = run_cdr(snapshot, level=Level.STATE)
        row = table.row(GroupKey(league="NBA", state="CA"))
        assert row.cohort_size == 2
        assert row.cds == {"trump": 0.25, "biden": 1.25, "sanders": 0.0}
        assert row.cdr["biden"] == pytest.approx(0.8333333333333334)
        assert row.cdr["trump"] == pytest.approx(0.16666666666666666)
        assert row.cdr["sanders"] == 0.0

    def test_single_sanders_follower(self):
        snapshot = build_snapshot({"nba_rockets": [7], "sen_i01": [7], "sanders": [7]})
        row = run_cdr(snapshot, level=Level.TEAM).row(
            GroupKey(league="NBA", state="TX", team="nba_rockets")
        )
        assert row.cdr == {"trump": 0.0, "biden": 0.0, "sanders": 1.0}

    def test_empty_grouping_has_undefined_row(self):
        snapshot = build_snapshot({"nba_lakers": [1], "sen_d01": [1], "biden": [1]})
        table = run_cdr(snapshot, level=Level.STATE)
        texas = table.row(GroupKey(league="NBA", state="TX"))
        assert texas.cohort_size == 0
        assert texas.cdr is None
        assert texas.cds == {"trump": 0.0, "biden": 0.0, "sanders": 0.0}

    def test_row_order(self):
        snapshot = build_snapshot({})
        table = run_cdr(snapshot, level=Level.TEAM)
        assert [r.group.label for r in table.rows] == [
            "NBA/CA/nba_lakers",
            "NBA/CA/nba_warriors",
            "NBA/TX/nba_rockets",
            "NFL/CA/nfl_rams",
            "NFL/TX/nfl_texans",
        ]
        assert table.candidates == ["trump", "biden", "sanders"]

    @pytest.mark.parametrize("level", list(Level))
    def test_matches_naive_loop_exactly(self, level):
        rng = np.random.default_rng(2020)
        for _ in range(200):
            snapshot = random_snapshot(
                rng,
                n_users=int(rng.integers(1, 400)),
                n_teams=int(rng.integers(1, 7)),
                n_dem=int(rng.integers(1, 5)),
                n_rep=int(rng.integers(0, 5)),
            )
            expected = naive_cdr(snapshot, level)
            table = run_cdr(snapshot, level=level)
            assert len(table.rows) == len(expected)
            for row in table.rows:
                users, cds = expected[row.group]
                assert row.cohort_size == users
                assert row.cds == cds

    def test_orientation_and_threads_do_not_change_result(self):
        rng = np.random.default_rng(8)
        snapshot = random_snapshot(rng, n_users=2000, n_teams=6)
        reference = run_cdr(snapshot, level=Level.TEAM)
        assert run_cdr(snapshot, level=Level.TEAM, orientation=Orientation.PER_SENATOR) == reference
        assert run_cdr(snapshot, level=Level.TEAM, threads=4) == reference

    def test_team_state_sport_additive(self):
        rng = np.random.default_rng(9)
        assert_cds_additive(random_snapshot(rng, n_users=3000, n_teams=7))

    def test_additive_over_simulated_datasets(self):
        for seed in range(20):
            config = SynthConfig(
                seed=seed,
                states=[
                    StateSpec(code="CA", n_users=400, lean=-0.4),
                    StateSpec(code="NY", n_users=300, lean=-0.1),
                    StateSpec(code="TX", n_users=400, lean=0.5),
                ],
                noise_rate=0.05,
            )
            assert_cds_additive(simulate(config).snapshot())

    def test_defined_rows_are_normalised(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            snapshot = random_snapshot(rng, n_users=300, n_teams=5)
            for level in Level:
                for row in run_cdr(snapshot, level=level).rows:
                    if row.defined:
                        assert sum(row.cdr.values()) == pytest.approx(1.0, abs=1e-9)


class TestRatioAndBreakdownTables:
    def test_ratio_rows(self):
        snapshot = build_snapshot(
            {
                "nba_lakers": [1, 2, 3, 4],
                "nba_rockets": [4, 5],
                "trump": [1, 5],
                "biden": [1, 2],
                "sen_r01": [1],
            }
        )
        rows = {r.group.label: r for r in run_ratios(snapshot, Level.STATE)}
        ca = rows["NBA/CA"]
        assert ca.fans == 3
        assert ca.overlaps == {"trump": 1, "biden": 2, "sanders": 0}
        assert ca.ratios == {"trump": 1 / 3, "biden": 2 / 3, "sanders": 0.0}
        assert ca.engagement_rate == 2 / 3
        assert ca.political_interest_rate == 1 / 3
        assert rows["NBA/TX"].fans == 1

    def test_undefined_ratio_row_is_kept(self):
        snapshot = build_snapshot({"nba_lakers": [1]})
        rows = {r.group.label: r for r in run_ratios(snapshot, Level.STATE)}
        assert not rows["NBA/CA"].defined
        assert rows["NBA/CA"].engagement_rate == 0.0
        assert rows["NBA/TX"].engagement_rate is None

    def test_every_defined_row_sums_to_one(self):
        rng = np.random.default_rng(12)
        snapshot = random_snapshot(rng, n_users=800, n_teams=6)
        for level in Level:
            for row in run_ratios(snapshot, level):
                if row.defined:
                    assert sum(row.ratios.values()) == pytest.approx(1.0, abs=1e-9)
            for row in run_senator_breakdown(snapshot, level):
                if row.defined:
                    total = row.only_democrat + row.only_republican + row.both
                    assert total == pytest.approx(1.0, abs=1e-9)
