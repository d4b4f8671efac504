"""Cursor-paginated follower-ID collection.

A :class:`Transport` answers one page request at a time. :func:`collect`
walks the cursor chain for one handle, waiting out rate limits on an injected
:class:`Clock` and retrying transient failures per :class:`RetryPolicy`.
:func:`collect_all` runs one job per registry entity and writes IDS1 follower
files plus a manifest with digests.
"""

import logging
import os
import threading
import time
import zlib
from collections.abc import Mapping, Sequence
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fanaffinity.errors import (
    AffinityError,
    CollectionAbortedError,
    CursorLoopError,
    PageSizeError,
    PermanentTransportError,
    RateLimitedError,
    RetriesExhaustedError,
    TransientTransportError,
)
from fanaffinity.idset import IdSet
from fanaffinity.ingest import Snapshot, digest_bytes
from fanaffinity.models import FileFormat
from fanaffinity.registry import Registry, save_manifest

logger = logging.getLogger(__name__)

FIRST_CURSOR = ""
TERMINAL_CURSOR = "0"
MAX_PAGE_SIZE = 5000
TOKEN_ENV = "AFFINITY_BEARER_TOKEN"


class RateLimit(BaseModel):
    remaining: int
    reset_at: float


class PageRequest(BaseModel):
    handle: str
    cursor: str = FIRST_CURSOR
    page_size: int = Field(default=MAX_PAGE_SIZE, ge=1, le=MAX_PAGE_SIZE)


class PageResponse(BaseModel):
    ids: list[int] = Field(default_factory=list)
    next_cursor: str = TERMINAL_CURSOR
    rate_limit: RateLimit = Field(
        default_factory=lambda: RateLimit(remaining=1, reset_at=0.0)
    )

    @property
    def is_last(self) -> bool:
        return self.next_cursor == TERMINAL_CURSOR


class Transport(Protocol):
    def fetch_page(self, request: PageRequest) -> PageResponse: ...


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class FakeClock:
    """Clock whose ``sleep`` advances time instantly and records the call."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()
        self.sleeps: list[float] = []

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.sleeps.append(seconds)
            self._now += seconds


class RetryPolicy(BaseModel):
    max_retries: int = Field(default=3, ge=0)
    backoff: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    page_size: int = Field(default=MAX_PAGE_SIZE, ge=1, le=MAX_PAGE_SIZE)
    max_rate_limit_waits: int = Field(default=1000, ge=0)
    min_rate_limit_wait: float = Field(default=1.0, gt=0)

    def delay(self, attempt: int) -> float:
        """Backoff before retry ``attempt`` (0-based); the last entry repeats."""
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt, len(self.backoff) - 1)]


class JobState(str, Enum):
    RUNNING = "running"
    RATE_LIMITED = "rate_limited"
    DONE = "done"
    FAILED = "failed"


_TRANSITIONS = {
    JobState.RUNNING: {JobState.RATE_LIMITED, JobState.DONE, JobState.FAILED},
    JobState.RATE_LIMITED: {JobState.RUNNING, JobState.FAILED},
    JobState.DONE: set(),
    JobState.FAILED: set(),
}


class CollectionJob(BaseModel):
    """Progress of one handle's collection."""

    handle: str
    state: JobState = JobState.RUNNING
    pages_fetched: int = 0
    ids_accumulated: int = 0
    rate_limited_until: float | None = None
    waits: list[float] = Field(default_factory=list)
    error: str | None = None

    def move_to(self, state: JobState) -> None:
        if state not in _TRANSITIONS[self.state]:
            raise ValueError(f"job {self.handle}: {self.state.value} -> {state.value}")
        self.state = state


def _wait_until(reset_at: float, clock: Clock, job: CollectionJob, fallback: float) -> None:
    """Sleep until ``reset_at``, or ``fallback`` seconds if that moment has passed."""
    delay = reset_at - clock.now()
    if delay <= 0:
        logger.debug("%s reset time %.1f already passed", job.handle, reset_at)
        delay = fallback
    job.move_to(JobState.RATE_LIMITED)
    job.rate_limited_until = clock.now() + delay
    logger.info("%s rate limited, waiting %.1fs", job.handle, delay)
    clock.sleep(delay)
    job.waits.append(delay)
    job.move_to(JobState.RUNNING)
    job.rate_limited_until = None


def _fetch(
    transport: Transport,
    request: PageRequest,
    policy: RetryPolicy,
    clock: Clock,
    job: CollectionJob,
) -> PageResponse:
    attempt = 0
    rate_limit_waits = 0
    while True:
        try:
            return transport.fetch_page(request)
        except RateLimitedError as e:
            rate_limit_waits += 1
            if rate_limit_waits > policy.max_rate_limit_waits:
                raise RetriesExhaustedError(
                    f"{request.handle}: still rate limited after {rate_limit_waits - 1} waits",
                    handle=request.handle,
                ) from e
            fallback = max(policy.delay(rate_limit_waits - 1), policy.min_rate_limit_wait)
            _wait_until(e.reset_at, clock, job, fallback)
        except TransientTransportError as e:
            if attempt >= policy.max_retries:
                raise RetriesExhaustedError(
                    f"{request.handle}: giving up after {attempt} retries: {e.message}",
                    handle=request.handle,
                    cursor=request.cursor,
                ) from e
            delay = policy.delay(attempt)
            logger.debug("%s transient failure, retry %d in %.1fs", request.handle, attempt + 1, delay)
            if delay > 0:
                clock.sleep(delay)
            attempt += 1


def collect(
    transport: Transport,
    handle: str,
    policy: RetryPolicy | None = None,
    clock: Clock | None = None,
    job: CollectionJob | None = None,
) -> IdSet:
    """Collect every follower ID of ``handle`` by walking the cursor chain.

    Raises:
        CursorLoopError: A non-terminal cursor came back a second time.
        RetriesExhaustedError: Transient failures outlasted the policy.
        PermanentTransportError: The transport refused for good.
    """
    policy = policy or RetryPolicy()
    clock = clock or SystemClock()
    job = job or CollectionJob(handle=handle)
    pages: list[np.ndarray] = []
    seen = {FIRST_CURSOR}
    cursor = FIRST_CURSOR
    try:
        while True:
            request = PageRequest(handle=handle, cursor=cursor, page_size=policy.page_size)
            response = _fetch(transport, request, policy, clock, job)
            if len(response.ids) > request.page_size:
                raise PageSizeError(
                    f"{handle}: page of {len(response.ids)} IDs exceeds {request.page_size}",
                    handle=handle,
                )
            pages.append(np.array(response.ids, dtype=np.uint64))
            job.pages_fetched += 1
            job.ids_accumulated += len(response.ids)
            if response.is_last:
                break
            if response.next_cursor in seen:
                raise CursorLoopError(
                    f"{handle}: cursor {response.next_cursor!r} returned twice",
                    handle=handle,
                    cursor=response.next_cursor,
                )
            seen.add(response.next_cursor)
            cursor = response.next_cursor
            if response.rate_limit.remaining <= 0:
                _wait_until(
                    response.rate_limit.reset_at, clock, job, policy.min_rate_limit_wait
                )
    except AffinityError as e:
        job.error = e.message
        job.move_to(JobState.FAILED)
        raise
    job.move_to(JobState.DONE)
    ids = IdSet.build(np.concatenate(pages)) if pages else IdSet.empty()
    logger.debug("%s: %d pages, %d distinct IDs", handle, job.pages_fetched, len(ids))
    return ids


class CollectionProgress:
    """Thread-safe view of all jobs of a ``collect_all`` run."""

    def __init__(self, handles: Sequence[str]):
        self._lock = threading.Lock()
        self._jobs = {h: CollectionJob(handle=h) for h in handles}

    def job(self, handle: str) -> CollectionJob:
        with self._lock:
            return self._jobs[handle]

    def report(self) -> dict[str, list[str]]:
        with self._lock:
            by_state: dict[str, list[str]] = {"done": [], "failed": [], "pending": []}
            for handle, job in self._jobs.items():
                if job.state is JobState.DONE:
                    by_state["done"].append(handle)
                elif job.state is JobState.FAILED:
                    by_state["failed"].append(handle)
                else:
                    by_state["pending"].append(handle)
            return by_state


class CollectionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    registry: Registry
    manifest_path: Path
    jobs: list[CollectionJob]


def collect_all(
    transport: Transport,
    registry: Registry,
    out_dir: Path,
    concurrency_limit: int = 4,
    policy: RetryPolicy | None = None,
    clock: Clock | None = None,
    follower_dir: str = "followers",
) -> CollectionResult:
    """Collect every entity and write IDS1 files plus ``manifest.json``.

    At most ``concurrency_limit`` jobs run at once. File contents and the
    manifest are independent of the concurrency degree.

    Raises:
        CollectionAbortedError: A job failed; ``details`` lists done, failed
            and pending handles.
    """
    policy = policy or RetryPolicy()
    clock = clock or SystemClock()
    out_dir = Path(out_dir)
    (out_dir / follower_dir).mkdir(parents=True, exist_ok=True)
    collected_at = datetime.fromtimestamp(clock.now(), tz=timezone.utc).isoformat()
    handles = [e.handle for e in registry.entities]
    progress = CollectionProgress(handles)

    def run(handle: str) -> tuple[str, str]:
        ids = collect(transport, handle, policy, clock, progress.job(handle))
        relative = f"{follower_dir}/{handle}.ids"
        data = ids.to_bytes()
        (out_dir / relative).write_bytes(data)
        return relative, digest_bytes(data)

    with ThreadPoolExecutor(max_workers=max(1, concurrency_limit)) as pool:
        futures = {h: pool.submit(run, h) for h in handles}
        done, not_done = wait(futures.values(), return_when=FIRST_EXCEPTION)
        for future in not_done:
            future.cancel()
    failures = {
        h: f.exception() for h, f in futures.items() if not f.cancelled() and f.done() and f.exception()
    }
    if failures:
        report = progress.report()
        first = next(iter(failures))
        raise CollectionAbortedError(
            f"collection aborted: '{first}' failed: {failures[first]}",
            failed={h: getattr(e, "code", type(e).__name__) for h, e in failures.items()},
            done=report["done"],
            pending=report["pending"],
        )

    files = {h: futures[h].result() for h in handles}
    collected = registry.with_files(
        {h: (path, FileFormat.BINARY) for h, (path, _) in files.items()}
    ).with_digests({h: digest for h, (_, digest) in files.items()})
    collected = collected.model_copy(update={"collected_at": collected_at})
    manifest_path = save_manifest(collected, out_dir / "manifest.json")
    logger.info("Collected %d entities into %s", len(handles), out_dir)
    return CollectionResult(
        registry=collected,
        manifest_path=manifest_path,
        jobs=[progress.job(h) for h in handles],
    )


class ScriptedTransport:
    """Replays scripted responses (or raises scripted errors) per handle."""

    def __init__(self, script: Mapping[str, Sequence[PageResponse | Exception]]):
        self._script = {h: list(steps) for h, steps in script.items()}
        self._lock = threading.Lock()
        self.requests: list[PageRequest] = []

    def fetch_page(self, request: PageRequest) -> PageResponse:
        with self._lock:
            self.requests.append(request)
            steps = self._script.get(request.handle)
            if not steps:
                raise PermanentTransportError(
                    f"no scripted page left for '{request.handle}'", handle=request.handle
                )
            step = steps.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


class SnapshotTransport:
    """Serves an existing snapshot as shuffled pages.

    Each handle's IDs are shuffled with a seed derived from ``seed`` and the
    handle, split into pages, and every page after the first repeats a few IDs
    of the previous page. The rate limit runs out every ``pages_per_window``
    pages and resets ``window_seconds`` later on ``clock``.
    """

    def __init__(
        self,
        snapshot: Snapshot,
        clock: Clock,
        seed: int = 0,
        pages_per_window: int = 15,
        window_seconds: float = 900.0,
        duplicate_rate: float = 0.01,
    ):
        self._snapshot = snapshot
        self._clock = clock
        self._seed = seed
        self._pages_per_window = pages_per_window
        self._window_seconds = window_seconds
        self._duplicate_rate = duplicate_rate
        self._cache: dict[tuple[str, int], list[np.ndarray]] = {}
        self._lock = threading.Lock()

    def _pages(self, handle: str, page_size: int) -> list[np.ndarray]:
        key = (handle, page_size)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        ids = self._snapshot.followers(handle).to_numpy()
        rng = np.random.default_rng([self._seed, zlib.crc32(handle.encode())])
        shuffled = rng.permutation(ids.copy())
        fresh = max(1, page_size - int(page_size * self._duplicate_rate))
        pages = []
        for start in range(0, shuffled.size, fresh):
            page = shuffled[start : start + fresh]
            if pages and page_size > fresh:
                page = np.concatenate((pages[-1][: page_size - fresh], page))
            pages.append(page)
        pages = pages or [np.empty(0, dtype=np.uint64)]
        with self._lock:
            self._cache[key] = pages
        return pages

    def fetch_page(self, request: PageRequest) -> PageResponse:
        pages = self._pages(request.handle, request.page_size)
        index = int(request.cursor[1:]) if request.cursor else 0
        last = index == len(pages) - 1
        remaining = self._pages_per_window - 1 - index % self._pages_per_window
        return PageResponse(
            ids=pages[index].tolist(),
            next_cursor=TERMINAL_CURSOR if last else f"p{index + 1}",
            rate_limit=RateLimit(
                remaining=remaining, reset_at=self._clock.now() + self._window_seconds
            ),
        )


class HttpTransport:
    """Thin adapter for a follower-ID HTTP endpoint.

    Speaks the ``followers/ids`` shape: ``ids``, ``next_cursor_str`` and
    ``x-rate-limit-*`` headers. The bearer token comes from
    ``AFFINITY_BEARER_TOKEN`` unless passed explicitly.
    """

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        import requests

        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._session = requests.Session()
        token = token or os.environ.get(TOKEN_ENV)
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"

    def fetch_page(self, request: PageRequest) -> PageResponse:
        import requests

        params = {
            "screen_name": request.handle,
            "cursor": request.cursor or "-1",
            "count": request.page_size,
            "stringify_ids": "true",
        }
        try:
            resp = self._session.get(
                f"{self._base_url}/followers/ids.json", params=params, timeout=self._timeout
            )
        except requests.RequestException as e:
            raise TransientTransportError(str(e), handle=request.handle) from e

        reset_at = float(resp.headers.get("x-rate-limit-reset", "0") or 0)
        if resp.status_code == 429:
            raise RateLimitedError("rate limited", reset_at=reset_at, handle=request.handle)
        if resp.status_code >= 500:
            raise TransientTransportError(
                f"HTTP {resp.status_code}", handle=request.handle
            )
        if resp.status_code >= 400:
            raise PermanentTransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}", handle=request.handle
            )
        body = resp.json()
        return PageResponse(
            ids=[int(i) for i in body.get("ids", [])],
            next_cursor=str(body.get("next_cursor_str", TERMINAL_CURSOR)),
            rate_limit=RateLimit(
                remaining=int(resp.headers.get("x-rate-limit-remaining", "1")),
                reset_at=reset_at,
            ),
        )
