"""Exception hierarchy for the affinity engine.

Every failure the engine can name has its own class. Each carries a stable
``code`` and a ``details`` mapping so the CLI can report it as a violation.
"""

from typing import Any, ClassVar


class AffinityError(Exception):
    """Base class for all engine errors."""

    code: ClassVar[str] = "affinity_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self) -> dict[str, Any]:
        """Machine-readable form of the error."""
        return {"code": self.code, "message": self.message, **self.details}


# --- idset -----------------------------------------------------------------


class IdSetFormatError(AffinityError):
    code = "idset_format"


class MagicMismatchError(IdSetFormatError):
    code = "magic_mismatch"


class OrderingViolationError(IdSetFormatError):
    code = "ordering_violation"


class EmptySetSequenceError(AffinityError, ValueError):
    """Raised when a membership count is requested over zero sets."""

    code = "empty_set_sequence"


# --- registry --------------------------------------------------------------


class RegistryError(AffinityError):
    code = "registry_error"


class ManifestFormatError(RegistryError):
    code = "manifest_format"


class DuplicateHandleError(RegistryError):
    code = "duplicate_handle"


class UnknownLeagueError(RegistryError):
    code = "unknown_league"


class UnknownStateError(RegistryError):
    code = "unknown_state"


class SenatorIsCandidateError(RegistryError):
    code = "senator_is_candidate"


class MissingCaucusMappingError(RegistryError):
    code = "missing_caucus_mapping"


class NotASenatorError(RegistryError):
    code = "not_a_senator"


class UnknownHandleError(RegistryError):
    code = "unknown_handle"


class IncompleteRegistryError(RegistryError):
    code = "incomplete_registry"


# --- ingest ----------------------------------------------------------------


class IngestError(AffinityError):
    code = "ingest_error"


class MissingFollowerFileError(IngestError):
    code = "missing_file"


class FollowerFileUnreadableError(IngestError):
    code = "unreadable_file"


class PathOutsideRootError(IngestError):
    code = "path_outside_root"


class DigestMismatchError(IngestError):
    code = "digest_mismatch"


class MalformedFileError(IngestError):
    code = "malformed_file"


# --- collector -------------------------------------------------------------


class CollectionError(AffinityError):
    code = "collection_error"


class TransientTransportError(CollectionError):
    code = "transient_transport"


class RateLimitedError(TransientTransportError):
    """Transport refused a page until ``reset_at``."""

    code = "rate_limited"

    def __init__(self, message: str, reset_at: float, **details: Any):
        super().__init__(message, reset_at=reset_at, **details)
        self.reset_at = reset_at


class PermanentTransportError(CollectionError):
    code = "permanent_transport"


class RetriesExhaustedError(CollectionError):
    code = "retries_exhausted"


class CursorLoopError(CollectionError):
    code = "cursor_loop"


class PageSizeError(CollectionError, ValueError):
    code = "page_size"


class CollectionAbortedError(CollectionError):
    """A job failed fatally; ``details`` holds the partial-progress report."""

    code = "collection_aborted"


# --- metrics ---------------------------------------------------------------


class MetricError(AffinityError):
    code = "metric_error"


class UndefinedWeightError(MetricError):
    code = "undefined_weight"


class NoCandidateFollowedError(MetricError):
    code = "no_candidate_followed"


class UnknownCandidateError(MetricError):
    code = "unknown_candidate"


class DuplicateUserError(MetricError):
    code = "duplicate_user"


# --- pipeline --------------------------------------------------------------


class PipelineError(AffinityError):
    code = "pipeline_error"


class UndefinedRowError(PipelineError):
    code = "undefined_row"


class EmptyCohortError(PipelineError, ValueError):
    code = "empty_cohort"


# --- synth -----------------------------------------------------------------


class SynthConfigError(AffinityError):
    code = "synth_config"


class EmptyRosterError(SynthConfigError):
    code = "empty_roster"
