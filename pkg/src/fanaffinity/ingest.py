"""Follower file ingest: text and IDS1 binary files into per-entity IdSets."""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fanaffinity.errors import (
    AffinityError,
    DigestMismatchError,
    FollowerFileUnreadableError,
    MalformedFileError,
    MissingFollowerFileError,
    PathOutsideRootError,
    RegistryError,
)
from fanaffinity.idset import MAX_USER_ID, IdSet, union_all
from fanaffinity.models import FileFormat, Party, Violation
from fanaffinity.registry import DIGEST_ALGORITHM, Entity, Registry, load_registry_file

logger = logging.getLogger(__name__)

DEFAULT_MALFORMED_THRESHOLD = 0.01
_MAX_DIGITS = len(str(MAX_USER_ID))


class IngestEntry(BaseModel):
    """Counts for one follower file.

    ``raw_count`` counts every non-blank record read, malformed ones included,
    so ``distinct + duplicate + malformed == raw``.
    """

    handle: str = ""
    path: str
    format: FileFormat
    raw_count: int = 0
    distinct_count: int = 0
    duplicate_count: int = 0
    malformed_line_count: int = 0
    digest: str


class IngestReport(BaseModel):
    entries: list[IngestEntry] = Field(default_factory=list)

    def entry(self, handle: str) -> IngestEntry:
        for e in self.entries:
            if e.handle == handle:
                return e
        raise KeyError(handle)

    @property
    def digests(self) -> dict[str, str]:
        return {e.handle: e.digest for e in self.entries}


def digest_bytes(data: bytes) -> str:
    return f"{DIGEST_ALGORITHM}:{hashlib.sha256(data).hexdigest()}"


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return f"{DIGEST_ALGORITHM}:{h.hexdigest()}"


def _parse_text(data: bytes) -> tuple[np.ndarray, int, int]:
    """Return (parsed ids, raw record count, malformed count)."""
    values: list[int] = []
    raw = 0
    malformed = 0
    for line in data.splitlines():
        token = line.strip()
        if not token:
            continue
        raw += 1
        # bytes.isdigit is ASCII-only, which rules out signs and unicode digits
        if token.isdigit() and len(token) <= _MAX_DIGITS:
            value = int(token)
            if value <= MAX_USER_ID:
                values.append(value)
                continue
        malformed += 1
    return np.array(values, dtype=np.uint64), raw, malformed


def read_follower_file(
    path: Path,
    format: FileFormat | str = FileFormat.TEXT,
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD,
    handle: str = "",
) -> tuple[IdSet, IngestEntry]:
    """Read one follower file into an IdSet.

    Text files hold one decimal ID per line (LF or CRLF); blank lines are
    skipped and non-decimal lines are counted as malformed. The file is fatal
    only when the malformed share of non-blank lines exceeds
    ``malformed_threshold``.

    Raises:
        FollowerFileUnreadableError: The file cannot be read.
        MagicMismatchError, OrderingViolationError: Bad binary file.
        MalformedFileError: Too many malformed text lines.
    """
    path = Path(path)
    fmt = FileFormat(format)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FollowerFileUnreadableError(
            f"cannot read {path}: {e}", handle=handle, path=str(path)
        ) from e
    digest = digest_bytes(data)

    if fmt is FileFormat.BINARY:
        try:
            ids = IdSet.from_bytes(data)
        except AffinityError as e:
            e.details.setdefault("path", str(path))
            e.details.setdefault("handle", handle)
            raise
        entry = IngestEntry(
            handle=handle,
            path=str(path),
            format=fmt,
            raw_count=len(ids),
            distinct_count=len(ids),
            digest=digest,
        )
        return ids, entry

    values, raw, malformed = _parse_text(data)
    if raw and malformed / raw > malformed_threshold:
        raise MalformedFileError(
            f"{path}: {malformed} of {raw} lines malformed "
            f"(threshold {malformed_threshold:.2%})",
            handle=handle,
            path=str(path),
            malformed=malformed,
            raw=raw,
        )
    if malformed:
        logger.warning("%s: skipped %d malformed line(s)", path, malformed)
    ids = IdSet.build(values)
    entry = IngestEntry(
        handle=handle,
        path=str(path),
        format=fmt,
        raw_count=raw,
        distinct_count=len(ids),
        duplicate_count=raw - malformed - len(ids),
        malformed_line_count=malformed,
        digest=digest,
    )
    return ids, entry


class Snapshot(BaseModel):
    """Frozen collection of per-entity follower sets taken at one time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    registry: Registry
    sets: dict[str, IdSet]
    collected_at: str = ""

    def followers(self, handle: str) -> IdSet:
        return self.sets[handle]

    def union_of(self, entities: list[Entity]) -> IdSet:
        return union_all(self.sets[e.handle] for e in entities)

    def senator_union(self) -> IdSet:
        return self.union_of(self.registry.senators)

    def party_senator_union(self, party: Party) -> IdSet:
        return self.union_of(self.registry.senators_of(party))

    def candidate_union(self) -> IdSet:
        return self.union_of(self.registry.candidates)

    def candidate_sets(self) -> dict[str, IdSet]:
        """Candidate follower sets in registry order."""
        return {h: self.sets[h] for h in self.registry.candidate_handles}


def resolve_follower_path(root: Path, entity: Entity) -> Path:
    """Resolve an entity's follower file, which must stay under ``root``."""
    root = Path(root).resolve()
    path = (root / entity.follower_file).resolve()
    if not path.is_relative_to(root):
        raise PathOutsideRootError(
            f"follower file of '{entity.handle}' resolves outside {root}",
            handle=entity.handle,
            path=str(path),
        )
    return path


def _load_entity(
    root: Path, entity: Entity, malformed_threshold: float
) -> tuple[IdSet, IngestEntry]:
    path = resolve_follower_path(root, entity)
    if not path.is_file():
        raise MissingFollowerFileError(
            f"follower file for '{entity.handle}' not found: {path}",
            handle=entity.handle,
            path=str(path),
        )
    ids, entry = read_follower_file(
        path, entity.format, malformed_threshold, handle=entity.handle
    )
    if entity.digest is not None and entity.digest != entry.digest:
        raise DigestMismatchError(
            f"digest mismatch for '{entity.handle}'",
            handle=entity.handle,
            path=str(path),
            expected=entity.digest,
            actual=entry.digest,
        )
    logger.debug("Loaded %s: %d distinct IDs", entity.handle, entry.distinct_count)
    return ids, entry


def load_snapshot(
    registry: Registry,
    root: Path,
    threads: int = 1,
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD,
) -> tuple[Snapshot, IngestReport]:
    """Load every entity's follower file under ``root``.

    Files may be read concurrently; the snapshot and report are assembled in
    registry order so the result does not depend on ``threads``.
    """
    entities = list(registry.entities)

    def load(entity: Entity) -> tuple[IdSet, IngestEntry]:
        return _load_entity(root, entity, malformed_threshold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(load, entities))
    else:
        results = [load(e) for e in entities]

    sets = {e.handle: ids for e, (ids, _) in zip(entities, results)}
    report = IngestReport(entries=[entry for _, entry in results])
    logger.info("Loaded snapshot of %d entities from %s", len(sets), root)
    snapshot = Snapshot(registry=registry, sets=sets, collected_at=registry.collected_at)
    return snapshot, report


def load_dataset(
    manifest_path: Path,
    threads: int = 1,
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD,
) -> tuple[Snapshot, IngestReport]:
    """Load a manifest and the follower files next to it."""
    manifest_path = Path(manifest_path)
    registry = load_registry_file(manifest_path)
    return load_snapshot(registry, manifest_path.parent, threads, malformed_threshold)


def _violation(error: AffinityError) -> Violation:
    details = dict(error.details)
    handle = details.pop("handle", None) or None
    return Violation(code=error.code, message=error.message, handle=handle, details=details)


def validate_dataset(
    manifest_path: Path, malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD
) -> list[Violation]:
    """Check a manifest and every follower file, collecting all violations."""
    manifest_path = Path(manifest_path)
    try:
        registry = load_registry_file(manifest_path)
    except OSError as e:
        return [Violation(code="unreadable_manifest", message=str(e))]
    except RegistryError as e:
        return [_violation(e)]

    violations = []
    try:
        registry.require_runnable()
    except RegistryError as e:
        violations.append(_violation(e))

    for entity in registry.entities:
        try:
            _load_entity(manifest_path.parent, entity, malformed_threshold)
        except AffinityError as e:
            violations.append(_violation(e))
    return violations
