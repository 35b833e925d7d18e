"""Detector kit: descriptors, results, the registry, and execution helpers.

A detector implementation is any callable ``(text: str) -> Sequence[Finding]``.
Detectors are stateless with respect to requests and must never see each
other's output; the orchestrator gives each one the raw request text.

Execution is wrapped so that one misbehaving detector cannot take the
request down: exceptions become status=ERROR results, overruns become
status=TIMEOUT results.  A timed-out detector's worker thread is abandoned
and runs to completion in the background; its result is discarded.
"""

from __future__ import annotations

import logging
import re
import time
import uuid
from concurrent.futures import Executor, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from fnmatch import fnmatchcase
from typing import Callable, Sequence

import requests

from .errors import GuardgateError, ValidationError
from .model import Decision, Finding, Span

logger = logging.getLogger(__name__)

_DETECTOR_ID_RE = re.compile(r"^[a-z0-9][a-z0-9._-]*$")

DetectorFn = Callable[[str], Sequence[Finding]]


class DetectorKind(str, Enum):
    """What a detector produces: labels, located entities, or source matches."""

    CLASSIFICATION = "classification"
    EXTRACTION = "extraction"
    COMPARISON = "comparison"


class FailMode(str, Enum):
    """What a degraded detector means for the request."""

    FAIL_OPEN = "fail_open"
    FAIL_CLOSED = "fail_closed"


class ResultStatus(str, Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    ERROR = "error"


@dataclass(frozen=True)
class DetectorDescriptor:
    """Registration record for one detector."""

    detector_id: str
    kind: DetectorKind
    categories: frozenset[str]
    timeout_ms: float = 2000.0
    fail_mode: FailMode = FailMode.FAIL_OPEN

    def __post_init__(self):
        if not _DETECTOR_ID_RE.match(self.detector_id):
            raise ValidationError(
                "BAD_DETECTOR_ID",
                f"detector_id must match [a-z0-9][a-z0-9._-]*, got {self.detector_id!r}")
        if self.timeout_ms <= 0:
            raise ValidationError(
                "BAD_TIMEOUT", f"timeout_ms must be positive, got {self.timeout_ms}")


@dataclass(frozen=True)
class DetectorResult:
    """Outcome of one detector call.  Degraded results carry no findings."""

    detector_id: str
    findings: tuple[Finding, ...]
    elapsed_ms: float
    status: ResultStatus = ResultStatus.OK

    def __post_init__(self):
        if self.status is not ResultStatus.OK and self.findings:
            raise ValidationError(
                "DEGRADED_WITH_FINDINGS",
                f"detector {self.detector_id}: status {self.status.value} "
                "must not carry findings")


class DetectorRegistry:
    """Insertion-ordered registry of (descriptor, implementation) pairs."""

    def __init__(self):
        self._entries: dict[str, tuple[DetectorDescriptor, DetectorFn]] = {}

    def register(self, descriptor: DetectorDescriptor, impl: DetectorFn) -> None:
        if descriptor.detector_id in self._entries:
            raise ValidationError(
                "DUPLICATE_DETECTOR_ID",
                f"detector {descriptor.detector_id!r} already registered")
        self._entries[descriptor.detector_id] = (descriptor, impl)

    def get(self, detector_id: str) -> tuple[DetectorDescriptor, DetectorFn]:
        try:
            return self._entries[detector_id]
        except KeyError:
            raise ValidationError(
                "UNKNOWN_DETECTOR_ID", f"no detector {detector_id!r}") from None

    def descriptor(self, detector_id: str) -> DetectorDescriptor:
        return self.get(detector_id)[0]

    def ids(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def descriptors(self) -> tuple[DetectorDescriptor, ...]:
        return tuple(d for d, _ in self._entries.values())

    def __contains__(self, detector_id: str) -> bool:
        return detector_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# execution

class DetectorTimeout(Exception):
    """Raised inside an implementation when its own I/O deadline passed."""


class DetectorCallError(Exception):
    """Raised inside an implementation on an internal failure."""


def call_detector(descriptor: DetectorDescriptor, impl: DetectorFn,
                  text: str) -> DetectorResult:
    """Run ``impl`` synchronously, converting failures into statuses.

    No timeout is enforced here; use :func:`detect` or the orchestrator for
    that.  ``DetectorTimeout`` from the implementation (a remote call that
    hit its own deadline) maps to TIMEOUT, any other exception to ERROR.
    """
    start = time.perf_counter()
    try:
        findings = tuple(impl(text))
        status = ResultStatus.OK
    except DetectorTimeout:
        findings, status = (), ResultStatus.TIMEOUT
    except Exception:
        logger.exception("detector %s failed", descriptor.detector_id)
        findings, status = (), ResultStatus.ERROR
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return DetectorResult(descriptor.detector_id, findings, elapsed_ms, status)


def detect(descriptor: DetectorDescriptor, impl: DetectorFn, text: str,
           pool: Executor | None = None) -> DetectorResult:
    """Run one detector under its timeout budget.

    Returns within roughly ``timeout_ms`` plus scheduling overhead.  With no
    ``pool`` a transient single-use worker is spawned.
    """
    own_pool = pool is None
    executor = pool or ThreadPoolExecutor(max_workers=1)
    try:
        future = executor.submit(call_detector, descriptor, impl, text)
        try:
            return future.result(timeout=descriptor.timeout_ms / 1000.0)
        except FutureTimeout:
            future.cancel()
            return DetectorResult(
                descriptor.detector_id, (), float(descriptor.timeout_ms),
                ResultStatus.TIMEOUT)
    finally:
        if own_pool:
            executor.shutdown(wait=False)


# ---------------------------------------------------------------------------
# remote detectors

class RemoteDetector:
    """Client for the remote detector wire protocol.

    POSTs ``{"text", "request_id"}`` to the endpoint and expects
    ``{"detector_id", "findings": [{category, label, score, span|null,
    evidence|null}]}``.  Non-200 responses and malformed bodies raise
    :class:`DetectorCallError` (surfacing as status=ERROR); client-side
    deadline overruns raise :class:`DetectorTimeout`.
    """

    def __init__(self, detector_id: str, endpoint: str, timeout_ms: float = 2000.0,
                 session: requests.Session | None = None):
        self.detector_id = detector_id
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms
        self._session = session or requests.Session()

    def __call__(self, text: str) -> list[Finding]:
        body = {"text": text, "request_id": uuid.uuid4().hex}
        try:
            resp = self._session.post(
                self.endpoint, json=body, timeout=self.timeout_ms / 1000.0)
        except requests.Timeout as exc:
            raise DetectorTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise DetectorCallError(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise DetectorCallError(f"endpoint returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            raw = payload["findings"]
        except (ValueError, KeyError, TypeError) as exc:
            raise DetectorCallError(f"malformed response body: {exc}") from exc
        return [self._parse_finding(item, len(text)) for item in raw]

    def _parse_finding(self, item, text_len: int) -> Finding:
        try:
            span = None
            if item.get("span") is not None:
                span = Span(int(item["span"]["start"]), int(item["span"]["end"]))
                if span.end > text_len:
                    raise DetectorCallError(f"span {span} exceeds text length")
            return Finding(
                detector_id=self.detector_id,
                category=str(item["category"]),
                score=float(item["score"]),
                label=str(item["label"]),
                span=span,
                evidence=item.get("evidence"),
            )
        except DetectorCallError:
            raise
        except (KeyError, TypeError, ValueError, GuardgateError) as exc:
            raise DetectorCallError(f"malformed finding: {exc}") from exc


def remote_detect(endpoint: str, text: str, timeout_ms: float = 2000.0,
                  detector_id: str = "remote") -> list[Finding]:
    """One-shot convenience call against a remote detector endpoint.

    Raises DetectorTimeout / DetectorCallError instead of wrapping them in
    a degraded result; callers wanting the result envelope should register
    a RemoteDetector and go through detect().
    """
    return RemoteDetector(detector_id, endpoint, timeout_ms)(text)


def derive_fail_mode(categories: frozenset[str], templates) -> FailMode:
    """Default fail mode for a detector: closed when any loaded policy maps
    one of its categories to BLOCK, open otherwise."""
    for template in templates:
        for rule in template.rules:
            if rule.action is not Decision.BLOCK:
                continue
            for pattern in rule.category_patterns():
                if any(fnmatchcase(c, pattern) for c in categories):
                    return FailMode.FAIL_CLOSED
    return FailMode.FAIL_OPEN
