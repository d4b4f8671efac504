"""Per-user metric kernel: Congressional Weight, Devotedness and CDS.

The scalar functions define the metric for one user; :func:`batch_cds` is the
vectorised kernel the pipeline uses. Both evaluate each contribution as
``weight * sigma / n_followed`` and sum users in ascending ID order, so the two
agree bit for bit.
"""

import math
from collections.abc import Iterable, Mapping, Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fanaffinity.errors import (
    DuplicateUserError,
    NoCandidateFollowedError,
    UndefinedWeightError,
    UnknownCandidateError,
)
from fanaffinity.models import Party


class Summation(str, Enum):
    SEQUENTIAL = "sequential"
    COMPENSATED = "compensated"
    AUTO = "auto"


# AUTO switches to compensated summation above this many users per shard.
COMPENSATED_THRESHOLD = 10**7


def resolve_summation(summation: Summation | str, users: int) -> Summation:
    """Concrete summation mode for a shard of ``users`` rows."""
    summation = Summation(summation)
    if summation is not Summation.AUTO:
        return summation
    return Summation.COMPENSATED if users > COMPENSATED_THRESHOLD else Summation.SEQUENTIAL


class PartyFollowCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: int = Field(ge=0, description="Democrat-caucus senators followed")
    beta: int = Field(ge=0, description="Republican senators followed")


class CongressionalWeight(BaseModel):
    model_config = ConfigDict(frozen=True)

    w_dem: float = Field(ge=0.0, le=1.0)
    w_rep: float = Field(ge=0.0, le=1.0)

    def for_party(self, party: Party) -> float:
        return self.w_dem if party is Party.DEMOCRAT else self.w_rep


class CandidateFollowVector(BaseModel):
    """Indicator per candidate (sigma) for one user."""

    model_config = ConfigDict(frozen=True)

    follows: dict[str, int]

    @property
    def n_followed(self) -> int:
        return sum(self.follows.values())

    @classmethod
    def of(cls, followed: Iterable[str], candidates: Sequence[str]) -> "CandidateFollowVector":
        followed = set(followed)
        return cls(follows={c: int(c in followed) for c in candidates})


class DevotednessScores(BaseModel):
    """Per-candidate CDS and how many users contributed."""

    scores: dict[str, float]
    user_count: int = 0


def congressional_weight(counts: PartyFollowCounts) -> CongressionalWeight:
    """(alpha / (alpha + beta), beta / (alpha + beta)).

    Raises:
        UndefinedWeightError: The user follows no senator.
    """
    total = counts.alpha + counts.beta
    if total == 0:
        raise UndefinedWeightError(
            "congressional weight is undefined for a user following no senator"
        )
    return CongressionalWeight(w_dem=counts.alpha / total, w_rep=counts.beta / total)


def _require_followed(vec: CandidateFollowVector) -> int:
    n = vec.n_followed
    if n == 0:
        raise NoCandidateFollowedError("user follows none of the tracked candidates")
    return n


def devotedness(vec: CandidateFollowVector) -> dict[str, float]:
    n = _require_followed(vec)
    return {c: sigma / n for c, sigma in vec.follows.items()}


def cds_contribution(
    weight: CongressionalWeight,
    vec: CandidateFollowVector,
    candidate_parties: Mapping[str, Party],
) -> dict[str, float]:
    """One user's term of CDS_j for every candidate in ``vec``.

    The weight used for candidate j is the weight of j's own party.
    """
    n = _require_followed(vec)
    out = {}
    for candidate, sigma in vec.follows.items():
        if candidate not in candidate_parties:
            raise UnknownCandidateError(
                f"candidate '{candidate}' has no party", candidate=candidate
            )
        out[candidate] = weight.for_party(candidate_parties[candidate]) * sigma / n
    return out


def _column_sums(matrix: np.ndarray, summation: Summation) -> np.ndarray:
    if matrix.shape[0] == 0:
        return np.zeros(matrix.shape[1])
    if resolve_summation(summation, matrix.shape[0]) is Summation.COMPENSATED:
        return np.array([math.fsum(matrix[:, j]) for j in range(matrix.shape[1])])
    # add.accumulate is strictly left-to-right, unlike sum's pairwise reduction
    return np.add.accumulate(matrix, axis=0)[-1]


def accumulate_cds(
    contributions: Iterable[tuple[int, Mapping[str, float]]],
    candidates: Sequence[str],
    summation: Summation = Summation.SEQUENTIAL,
) -> DevotednessScores:
    """Sum per-user contributions in ascending user-ID order.

    Raises:
        DuplicateUserError: The same user was submitted twice.
    """
    ordered = sorted(contributions, key=lambda item: item[0])
    for (a, _), (b, _) in zip(ordered, ordered[1:]):
        if a == b:
            raise DuplicateUserError(f"user {a} contributed twice", user_id=a)
    matrix = np.array(
        [[float(c.get(name, 0.0)) for name in candidates] for _, c in ordered],
        dtype=np.float64,
    ).reshape(len(ordered), len(candidates))
    sums = _column_sums(matrix, Summation(summation))
    return DevotednessScores(
        scores={name: float(v) for name, v in zip(candidates, sums)},
        user_count=len(ordered),
    )


def batch_cds(
    alpha: np.ndarray,
    beta: np.ndarray,
    sigma: np.ndarray,
    candidates: Sequence[str],
    candidate_parties: Mapping[str, Party],
    summation: Summation = Summation.SEQUENTIAL,
) -> DevotednessScores:
    """Vectorised CDS over a cohort whose rows are in ascending user-ID order.

    Args:
        alpha: Democrat-caucus senators followed, one per user.
        beta: Republican senators followed, one per user.
        sigma: Boolean (users x candidates) follow matrix.
        candidates: Column names of ``sigma``.
        candidate_parties: Party of each candidate.
        summation: Sequential (bit-reproducible), compensated, or AUTO by cohort size.

    Raises:
        UndefinedWeightError: Some user follows no senator.
        NoCandidateFollowedError: Some user follows no candidate.
    """
    unknown = [c for c in candidates if c not in candidate_parties]
    if unknown:
        raise UnknownCandidateError(f"candidates without party: {unknown}", candidates=unknown)

    total = alpha.astype(np.int64) + beta.astype(np.int64)
    if np.any(total == 0):
        raise UndefinedWeightError(
            "cohort contains users following no senator", users=int(np.sum(total == 0))
        )
    sigma = sigma.astype(np.float64)
    n_followed = sigma.sum(axis=1)
    if np.any(n_followed == 0):
        raise NoCandidateFollowedError(
            "cohort contains users following no candidate",
            users=int(np.sum(n_followed == 0)),
        )
    w_dem = alpha.astype(np.float64) / total
    w_rep = beta.astype(np.float64) / total
    weights = np.column_stack(
        [w_dem if candidate_parties[c] is Party.DEMOCRAT else w_rep for c in candidates]
    ) if candidates else np.empty((len(total), 0))
    contributions = weights * sigma / n_followed[:, None]
    sums = _column_sums(contributions, Summation(summation))
    return DevotednessScores(
        scores={c: float(v) for c, v in zip(candidates, sums)},
        user_count=int(len(total)),
    )


def combine_scores(
    shards: Sequence[DevotednessScores], candidates: Sequence[str]
) -> DevotednessScores:
    """Combine shard results left to right in the given shard order."""
    scores = {c: 0.0 for c in candidates}
    users = 0
    for shard in shards:
        for c in candidates:
            scores[c] += shard.scores.get(c, 0.0)
        users += shard.user_count
    return DevotednessScores(scores=scores, user_count=users)
