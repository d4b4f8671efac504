"""Seeded synthetic follower datasets with known political lean.

Every state draws its users from its own Philox stream, keyed by the seed and
the state's position in the config, so a state's users do not depend on how
many other states are generated or in which order they are processed.
"""

import json
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fanaffinity.errors import EmptyRosterError, SynthConfigError
from fanaffinity.idset import IdSet
from fanaffinity.ingest import Snapshot, digest_bytes
from fanaffinity.models import FileFormat, Party
from fanaffinity.registry import (
    INDEPENDENT,
    ROSTER_CANDIDATES,
    ROSTER_SENATE,
    ROSTER_TEAMS,
    Registry,
    roster_manifest,
    registry_from_manifest,
    save_manifest,
)

logger = logging.getLogger(__name__)

GROUND_TRUTH_FILE = "ground_truth.json"
MANIFEST_FILE = "manifest.json"
FOLLOWER_DIR = "followers"

# Latent classes stored in GroundTruth.classes
DEMOCRAT, REPUBLICAN, NOISE = 0, 1, 2
CLASS_NAMES = {DEMOCRAT: "democrat", REPUBLICAN: "republican", NOISE: "noise"}

Probability = float


class StateSpec(BaseModel):
    code: str = Field(pattern=r"^[A-Z]{2}$")
    n_users: int = Field(ge=1)
    lean: float = Field(ge=-1.0, le=1.0, description="-1 all Democrat, +1 all Republican")


class TeamSpec(BaseModel):
    league: str
    state: str
    name: str


class CandidateSpec(BaseModel):
    handle: str
    party: Party
    follow_prob: Probability = Field(ge=0.0, le=1.0)
    mix: float = Field(
        default=1.0, ge=0.0, description="relative share of its party preferring this candidate"
    )


def _roster_teams() -> list[TeamSpec]:
    return [TeamSpec(league=lg, state=st, name=nm) for lg, st, nm in ROSTER_TEAMS]


def _roster_candidates() -> list[CandidateSpec]:
    probs = {"trump": 0.30, "biden": 0.15, "sanders": 0.15}
    return [
        CandidateSpec(handle=h, party=p, follow_prob=probs.get(h, 0.15))
        for h, p in ROSTER_CANDIDATES
    ]


class SynthConfig(BaseModel):
    """Generator parameters; ``(seed, config)`` fixes every output byte."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(ge=0, lt=2**64)
    states: list[StateSpec] = Field(min_length=1)
    candidates: list[CandidateSpec] = Field(default_factory=_roster_candidates)
    teams: list[TeamSpec] = Field(default_factory=_roster_teams)
    senate: dict[str, int] = Field(default_factory=lambda: dict(ROSTER_SENATE))
    senator_intensity: float = Field(default=3.0, ge=0.0, description="expected own-party senators followed")
    cross_party_intensity: float = Field(default=0.0, ge=0.0)
    out_party_factor: Probability = Field(default=0.15, ge=0.0, le=1.0)
    home_team_bias: Probability = Field(default=0.9, ge=0.0, le=1.0)
    noise_rate: Probability = Field(default=0.0, ge=0.0, le=1.0)
    id_base: int = Field(default=10**12, ge=0)
    collected_at: str = "synthetic"

    @model_validator(mode="after")
    def _check_roster(self) -> "SynthConfig":
        codes = [s.code for s in self.states]
        if len(set(codes)) != len(codes):
            raise ValueError("state codes must be unique")
        if not self.candidates:
            raise ValueError("at least one candidate is required")
        unknown = set(self.senate) - {p.value for p in Party} - {INDEPENDENT}
        if unknown:
            raise ValueError(f"unknown senate parties: {sorted(unknown)}")
        if self.id_base + sum(s.n_users for s in self.states) > 2**64:
            raise ValueError("id_base leaves no room for 64-bit user IDs")
        return self

    @property
    def leagues(self) -> list[str]:
        """Leagues with at least one team in a configured state."""
        codes = {s.code for s in self.states}
        return sorted({t.league for t in self.teams if t.state in codes})


def load_synth_config(text: str) -> SynthConfig:
    """Parse a JSON config, naming each invalid field.

    Raises:
        SynthConfigError: ``details["fields"]`` lists every problem.
    """
    try:
        return SynthConfig.model_validate_json(text)
    except ValidationError as e:
        fields = [
            {"field": ".".join(str(p) for p in err["loc"]) or "<root>", "msg": err["msg"]}
            for err in e.errors()
        ]
        raise SynthConfigError(
            "invalid synth config: "
            + "; ".join(f"{f['field']}: {f['msg']}" for f in fields),
            fields=fields,
        ) from e


class GroundTruth(BaseModel):
    """Intended lean per state and the latent class of every user."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    leans: dict[str, float]
    user_ids: np.ndarray
    user_states: np.ndarray
    classes: np.ndarray

    def to_json(self) -> str:
        states = list(self.leans)
        return json.dumps(
            {
                "kind": "ground-truth",
                "input": False,
                "note": "Generator ground truth; not read by any pipeline stage.",
                "leans": self.leans,
                "classes": CLASS_NAMES,
                "users": [
                    [int(u), states[int(s)], int(c)]
                    for u, s, c in zip(self.user_ids, self.user_states, self.classes)
                ],
            },
            separators=(",", ":"),
        )


class StateSummary(BaseModel):
    state: str
    lean: float
    democrats: int
    republicans: int
    noise: int

    @property
    def total(self) -> int:
        return self.democrats + self.republicans + self.noise


class SyntheticDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    registry: Registry
    sets: dict[str, IdSet]
    truth: GroundTruth

    def snapshot(self) -> Snapshot:
        return Snapshot(registry=self.registry, sets=self.sets, collected_at=self.registry.collected_at)


def synthetic_registry(config: SynthConfig, file_format: FileFormat = FileFormat.TEXT) -> Registry:
    """Registry of the configured states, their teams, candidates and senate."""
    codes = [s.code for s in config.states]
    leagues = config.leagues
    if not leagues:
        raise EmptyRosterError("no team configured for any state", states=codes)
    for code in codes:
        for league in leagues:
            if not any(t.state == code and t.league == league for t in config.teams):
                raise EmptyRosterError(
                    f"no {league} team configured for state {code}", state=code, league=league
                )
    manifest = roster_manifest(
        follower_dir=FOLLOWER_DIR,
        file_format=file_format,
        states=codes,
        teams=[(t.league, t.state, t.name) for t in config.teams],
        candidates=[(c.handle, c.party) for c in config.candidates],
        senate=config.senate,
        collected_at=config.collected_at,
    )
    manifest.leagues = leagues
    return registry_from_manifest(manifest)


def _candidate_probs(config: SynthConfig, classes: np.ndarray, pick: np.ndarray) -> np.ndarray:
    """Users x candidates follow probabilities.

    Each party member prefers one candidate of its own party, chosen from the
    uniform draw ``pick`` in proportion to ``mix``. The preferred candidate is
    followed at its ``follow_prob``; every other candidate, own party or not,
    at ``follow_prob * out_party_factor``. Noise users follow every candidate
    at ``follow_prob``.
    """
    probs = np.empty((classes.size, len(config.candidates)))
    preferred = {}
    for party in {c.party for c in config.candidates}:
        same = [j for j, c in enumerate(config.candidates) if c.party is party]
        mix = np.array([config.candidates[j].mix for j in same])
        if mix.sum() <= 0:
            mix = np.ones(len(same))
        bounds = np.cumsum(mix) / mix.sum()
        index = np.minimum(np.searchsorted(bounds, pick, side="right"), len(same) - 1)
        for position, j in enumerate(same):
            preferred[j] = index == position
    for j, cand in enumerate(config.candidates):
        own = DEMOCRAT if cand.party is Party.DEMOCRAT else REPUBLICAN
        out_party = cand.follow_prob * config.out_party_factor
        probs[:, j] = np.where(
            classes == NOISE,
            cand.follow_prob,
            np.where((classes == own) & preferred[j], cand.follow_prob, out_party),
        )
    return probs


def _senator_probs(
    config: SynthConfig, classes: np.ndarray, parties: list[Party]
) -> np.ndarray:
    """Users x senators follow probabilities."""
    n_dem = sum(p is Party.DEMOCRAT for p in parties)
    n_rep = len(parties) - n_dem
    lam, cross = config.senator_intensity, config.cross_party_intensity

    def rate(intensity: float, n: int) -> float:
        return min(1.0, intensity / n) if n else 0.0

    own_dem, own_rep = rate(lam, n_dem), rate(lam, n_rep)
    cross_dem, cross_rep = rate(cross, n_dem), rate(cross, n_rep)
    noise = rate(lam, len(parties))
    senator_is_dem = np.array([p is Party.DEMOCRAT for p in parties])
    table = np.array(
        [
            np.where(senator_is_dem, own_dem, cross_rep),  # latent Democrat
            np.where(senator_is_dem, cross_dem, own_rep),  # latent Republican
            np.full(len(parties), noise),
        ]
    )
    return table[classes]


def simulate(config: SynthConfig) -> SyntheticDataset:
    """Generate the dataset in memory.

    Every user follows exactly one team per league (a home-state team with
    probability ``home_team_bias``, otherwise any team of the league), senators
    of its latent party at ``senator_intensity``, and candidates with
    party-conditioned probabilities: party members split between their own
    party's candidates by ``mix``. Noise users pick teams, senators and
    candidates without regard to party.
    """
    registry = synthetic_registry(config)
    leagues = config.leagues
    candidates = registry.candidates
    senators = registry.senators
    parties = [s.party for s in senators]
    league_teams = {lg: registry.teams_by(lg) for lg in leagues}

    follows: dict[str, list[np.ndarray]] = {e.handle: [] for e in registry.entities}
    truth_ids, truth_states, truth_classes = [], [], []
    next_id = config.id_base

    for k, state in enumerate(config.states):
        n = state.n_users
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(k,))))
        ids = np.arange(next_id, next_id + n, dtype=np.uint64)
        next_id += n

        classes = np.where(
            rng.random(n) < config.noise_rate,
            NOISE,
            np.where(rng.random(n) < (1.0 + state.lean) / 2.0, REPUBLICAN, DEMOCRAT),
        )

        for league in leagues:
            teams = league_teams[league]
            home = [i for i, t in enumerate(teams) if t.state == state.code]
            at_home = (rng.random(n) < config.home_team_bias) & (classes != NOISE)
            home_pick = np.asarray(home)[rng.integers(0, len(home), n)]
            any_pick = rng.integers(0, len(teams), n)
            choice = np.where(at_home, home_pick, any_pick)
            for i, team in enumerate(teams):
                follows[team.handle].append(ids[choice == i])

        senator_follow = rng.random((n, len(senators))) < _senator_probs(config, classes, parties)
        for j, senator in enumerate(senators):
            follows[senator.handle].append(ids[senator_follow[:, j]])

        pick = rng.random(n)
        candidate_probs = _candidate_probs(config, classes, pick)
        candidate_follow = rng.random((n, len(candidates))) < candidate_probs
        for j, cand in enumerate(candidates):
            follows[cand.handle].append(ids[candidate_follow[:, j]])

        truth_ids.append(ids)
        truth_states.append(np.full(n, k, dtype=np.int64))
        truth_classes.append(classes.astype(np.int64))

    # ids grow with state index, so concatenation stays ascending
    sets = {h: IdSet(np.concatenate(parts)) for h, parts in follows.items()}
    truth = GroundTruth(
        leans={s.code: s.lean for s in config.states},
        user_ids=np.concatenate(truth_ids),
        user_states=np.concatenate(truth_states),
        classes=np.concatenate(truth_classes),
    )
    return SyntheticDataset(registry=registry, sets=sets, truth=truth)


def _text_bytes(ids: IdSet) -> bytes:
    values = ids.to_numpy()
    if values.size == 0:
        return b""
    return ("\n".join(map(str, values.tolist())) + "\n").encode("ascii")


def generate(config: SynthConfig, out_dir: Path) -> tuple[Path, GroundTruth]:
    """Write follower text files, ``manifest.json`` and ``ground_truth.json``.

    Returns the manifest path and the ground truth.

    Raises:
        EmptyRosterError: A configured state has no team in some league.
    """
    dataset = simulate(config)
    out_dir = Path(out_dir)
    registry = dataset.registry
    digests = {}
    for entity in registry.entities:
        path = out_dir / entity.follower_file
        path.parent.mkdir(parents=True, exist_ok=True)
        data = _text_bytes(dataset.sets[entity.handle])
        path.write_bytes(data)
        digests[entity.handle] = digest_bytes(data)
    manifest_path = save_manifest(registry.with_digests(digests), out_dir / MANIFEST_FILE)
    (out_dir / GROUND_TRUTH_FILE).write_text(dataset.truth.to_json() + "\n", encoding="utf-8")
    logger.info(
        "Generated %d users across %d states into %s",
        dataset.truth.user_ids.size,
        len(config.states),
        out_dir,
    )
    return manifest_path, dataset.truth


def describe(truth: GroundTruth) -> list[StateSummary]:
    """Per-state counts of latent Democrats, Republicans and noise users."""
    rows = []
    for k, (code, lean) in enumerate(truth.leans.items()):
        classes = truth.classes[truth.user_states == k]
        rows.append(
            StateSummary(
                state=code,
                lean=lean,
                democrats=int(np.sum(classes == DEMOCRAT)),
                republicans=int(np.sum(classes == REPUBLICAN)),
                noise=int(np.sum(classes == NOISE)),
            )
        )
    return rows
