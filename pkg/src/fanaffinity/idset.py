"""Immutable sorted sets of 64-bit user IDs.

An ``IdSet`` wraps a read-only, strictly ascending numpy ``uint64`` array.
All algebra works on the sorted arrays directly:

- intersection, difference and union of similar-sized operands are a linear
  merge of the two sorted runs, compiled with numba and released from the GIL;
- when one operand is more than ``MERGE_RATIO`` times the other, the smaller
  one is binary-searched into the larger instead, O(m log n) with m <= n.

The binary file layout is ``b"IDS1"``, a little-endian u64 count, then
``count`` little-endian u64 values in strictly ascending order.
"""

from collections.abc import Iterable, Iterator, Mapping, Sequence
from pathlib import Path
from typing import BinaryIO

import numpy as np
from numba import njit

from fanaffinity.errors import (
    EmptySetSequenceError,
    IdSetFormatError,
    MagicMismatchError,
    OrderingViolationError,
)

MAGIC = b"IDS1"
HEADER_SIZE = len(MAGIC) + 8
WIRE_DTYPE = np.dtype("<u8")
MAX_USER_ID = 2**64 - 1
# Past this size ratio a binary search of the smaller operand beats a merge.
MERGE_RATIO = 16


def _freeze(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


def _is_strictly_ascending(values: np.ndarray) -> bool:
    return bool(values.size < 2 or np.all(values[1:] > values[:-1]))


def member_mask(needles: np.ndarray, haystack: np.ndarray) -> np.ndarray:
    """Boolean mask of which ``needles`` occur in the sorted ``haystack``."""
    if haystack.size == 0 or needles.size == 0:
        return np.zeros(needles.size, dtype=bool)
    idx = np.searchsorted(haystack, needles)
    np.minimum(idx, haystack.size - 1, out=idx)
    return haystack[idx] == needles


@njit(nogil=True)
def _intersect_sorted(a, b):
    out = np.empty(min(a.size, b.size), dtype=np.uint64)
    i = j = k = 0
    while i < a.size and j < b.size:
        if a[i] < b[j]:
            i += 1
        elif b[j] < a[i]:
            j += 1
        else:
            out[k] = a[i]
            k += 1
            i += 1
            j += 1
    return out[:k].copy()


@njit(nogil=True)
def _difference_sorted(a, b):
    out = np.empty(a.size, dtype=np.uint64)
    i = j = k = 0
    while i < a.size:
        if j == b.size or a[i] < b[j]:
            out[k] = a[i]
            k += 1
            i += 1
        elif b[j] < a[i]:
            j += 1
        else:
            i += 1
            j += 1
    return out[:k].copy()


@njit(nogil=True)
def _union_sorted(a, b):
    out = np.empty(a.size + b.size, dtype=np.uint64)
    i = j = k = 0
    while i < a.size and j < b.size:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
        elif b[j] < a[i]:
            out[k] = b[j]
            j += 1
        else:
            out[k] = a[i]
            i += 1
            j += 1
        k += 1
    while i < a.size:
        out[k] = a[i]
        i += 1
        k += 1
    while j < b.size:
        out[k] = b[j]
        j += 1
        k += 1
    return out[:k].copy()


class IdSet:
    """Compressed, sorted, deduplicated set of user IDs."""

    __slots__ = ("_ids",)

    def __init__(self, sorted_unique: np.ndarray):
        """Wrap an array that is already strictly ascending ``uint64``.

        Use :meth:`build` for arbitrary input.
        """
        self._ids = _freeze(np.asarray(sorted_unique, dtype=np.uint64))

    @classmethod
    def build(cls, ids: Iterable[int] | np.ndarray) -> "IdSet":
        """Build a set from unordered IDs, dropping duplicates.

        Raises:
            ValueError: A numpy input is not of integer dtype or holds
                negative values.
        """
        if isinstance(ids, np.ndarray):
            if ids.dtype.kind not in "iu":
                raise ValueError(f"user IDs must be integers, got {ids.dtype}")
            if ids.dtype.kind == "i" and ids.size and ids.min() < 0:
                raise ValueError("user IDs must be non-negative")
            values = ids.astype(np.uint64, copy=True)
        else:
            values = np.fromiter(ids, dtype=np.uint64)
        return cls(np.unique(values))

    @classmethod
    def empty(cls) -> "IdSet":
        return cls(np.empty(0, dtype=np.uint64))

    # --- basic protocol ---------------------------------------------------

    @property
    def cardinality(self) -> int:
        return int(self._ids.size)

    def __len__(self) -> int:
        return int(self._ids.size)

    def __iter__(self) -> Iterator[int]:
        return iter(self._ids.tolist())

    def __contains__(self, user_id: object) -> bool:
        if not isinstance(user_id, (int, np.integer)):
            return False
        return self.contains(int(user_id))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IdSet):
            return NotImplemented
        return bool(np.array_equal(self._ids, other._ids))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if self._ids.size <= 6:
            return f"IdSet({self._ids.tolist()})"
        head = ", ".join(str(v) for v in self._ids[:3].tolist())
        return f"IdSet([{head}, ...], cardinality={self.cardinality})"

    def __and__(self, other: "IdSet") -> "IdSet":
        return self.intersect(other)

    def __or__(self, other: "IdSet") -> "IdSet":
        return self.union(other)

    def __sub__(self, other: "IdSet") -> "IdSet":
        return self.difference(other)

    def to_numpy(self) -> np.ndarray:
        """Read-only view of the sorted IDs."""
        return self._ids

    def is_valid(self) -> bool:
        return _is_strictly_ascending(self._ids)

    # --- algebra ------------------------------------------------------------

    def contains(self, user_id: int) -> bool:
        if user_id < 0 or user_id > MAX_USER_ID or self._ids.size == 0:
            return False
        key = np.uint64(user_id)
        idx = int(np.searchsorted(self._ids, key))
        return idx < self._ids.size and self._ids[idx] == key

    def contains_many(self, user_ids: np.ndarray) -> np.ndarray:
        """Vectorised membership test for a sorted or unsorted uint64 array."""
        return member_mask(np.asarray(user_ids, dtype=np.uint64), self._ids)

    def intersect(self, other: "IdSet") -> "IdSet":
        small, large = sorted((self._ids, other._ids), key=lambda a: a.size)
        if small.size == 0:
            return IdSet.empty()
        if large.size > small.size * MERGE_RATIO:
            return IdSet(small[member_mask(small, large)])
        return IdSet(_intersect_sorted(small, large))

    def union(self, other: "IdSet") -> "IdSet":
        if other._ids.size == 0:
            return self
        if self._ids.size == 0:
            return other
        return IdSet(_union_sorted(self._ids, other._ids))

    def difference(self, other: "IdSet") -> "IdSet":
        if other._ids.size == 0 or self._ids.size == 0:
            return self
        if other._ids.size > self._ids.size * MERGE_RATIO:
            return IdSet(self._ids[~member_mask(self._ids, other._ids)])
        return IdSet(_difference_sorted(self._ids, other._ids))

    # --- serialization ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = MAGIC + np.array([self._ids.size], dtype=WIRE_DTYPE).tobytes()
        return header + self._ids.astype(WIRE_DTYPE, copy=False).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes | memoryview) -> "IdSet":
        """Decode the IDS1 layout, rejecting bad magic, size or ordering."""
        if len(data) < HEADER_SIZE:
            raise IdSetFormatError(
                "truncated IDS1 header", expected=HEADER_SIZE, actual=len(data)
            )
        magic = bytes(data[: len(MAGIC)])
        if magic != MAGIC:
            raise MagicMismatchError(
                f"bad magic {magic!r}, expected {MAGIC!r}",
                expected=MAGIC.decode(),
                actual=magic.decode("latin-1"),
            )
        count = int(np.frombuffer(data, dtype=WIRE_DTYPE, count=1, offset=4)[0])
        expected_size = HEADER_SIZE + 8 * count
        if len(data) != expected_size:
            raise IdSetFormatError(
                f"IDS1 payload holds {len(data)} bytes, header promises {expected_size}",
                expected=expected_size,
                actual=len(data),
            )
        values = np.frombuffer(data, dtype=WIRE_DTYPE, count=count, offset=HEADER_SIZE)
        values = values.astype(np.uint64, copy=True)
        if not _is_strictly_ascending(values):
            first_bad = int(np.argmax(values[1:] <= values[:-1])) + 1
            raise OrderingViolationError(
                f"IDS1 values not strictly ascending at index {first_bad}",
                index=first_bad,
            )
        return cls(values)

    def write(self, target: Path | BinaryIO) -> None:
        if isinstance(target, Path):
            target.write_bytes(self.to_bytes())
        else:
            target.write(self.to_bytes())

    @classmethod
    def read(cls, path: Path) -> "IdSet":
        return cls.from_bytes(Path(path).read_bytes())


def build(ids: Iterable[int] | np.ndarray) -> IdSet:
    return IdSet.build(ids)


def intersect(a: IdSet, b: IdSet) -> IdSet:
    return a.intersect(b)


def union(a: IdSet, b: IdSet) -> IdSet:
    return a.union(b)


def difference(a: IdSet, b: IdSet) -> IdSet:
    return a.difference(b)


def contains(a: IdSet, user_id: int) -> bool:
    return a.contains(user_id)


def union_all(sets: Iterable[IdSet]) -> IdSet:
    """Union of any number of sets in one concatenate-and-unique pass."""
    arrays = [s.to_numpy() for s in sets if len(s)]
    if not arrays:
        return IdSet.empty()
    if len(arrays) == 1:
        return IdSet(arrays[0])
    return IdSet(np.unique(np.concatenate(arrays)))


class MembershipCounts(Mapping[int, int]):
    """Read-only mapping user ID -> number of sets containing it."""

    __slots__ = ("ids", "counts")

    def __init__(self, ids: np.ndarray, counts: np.ndarray):
        self.ids = _freeze(ids)
        self.counts = _freeze(counts)

    def __getitem__(self, user_id: int) -> int:
        if user_id < 0 or user_id > MAX_USER_ID or self.ids.size == 0:
            raise KeyError(user_id)
        key = np.uint64(user_id)
        idx = int(np.searchsorted(self.ids, key))
        if idx >= self.ids.size or self.ids[idx] != key:
            raise KeyError(user_id)
        return int(self.counts[idx])

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids.tolist())

    def __len__(self) -> int:
        return int(self.ids.size)

    def with_count(self, count: int) -> IdSet:
        """Users contained in exactly ``count`` sets."""
        return IdSet(self.ids[self.counts == count])


def multi_way_membership_counts(sets: Sequence[IdSet]) -> MembershipCounts:
    """Count, for every user in any of ``sets``, how many sets contain it."""
    if len(sets) == 0:
        raise EmptySetSequenceError(
            "membership counts need at least one set; is the league configured?"
        )
    arrays = [s.to_numpy() for s in sets]
    ids, counts = np.unique(np.concatenate(arrays), return_counts=True)
    return MembershipCounts(ids.astype(np.uint64, copy=False), counts.astype(np.int64))
