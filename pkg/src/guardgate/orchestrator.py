"""Request orchestration: validate, fan out to detectors in parallel, wait
for all of them, and hand the aggregate to the policy engine.

Detectors run concurrently on a bounded worker pool, so wall time for one
request tracks the slowest detector rather than the sum.  Every dispatched
detector produces exactly one result: OK with findings, or TIMEOUT/ERROR
with none.  Degraded detectors never abort the request; fail-closed ones
turn into a BLOCK at the policy stage instead.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field

from .detectors import (DetectorRegistry, DetectorResult, FailMode,
                        ResultStatus, call_detector)
from .errors import ValidationError
from .model import Direction, ShieldRequest, Verdict, validate_request
from .policy import PolicyEngine

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = 40


@dataclass
class OrchestrationContext:
    """What happened while shielding one request."""

    request: ShieldRequest
    results: dict[str, DetectorResult] = field(default_factory=dict)
    started: float = 0.0
    finished: float = 0.0

    @property
    def degraded(self) -> list[str]:
        return [d for d, r in self.results.items() if r.status is not ResultStatus.OK]


class Orchestrator:
    """Owns the registry, the worker pool, and the policy engine."""

    def __init__(self, registry: DetectorRegistry, engine: PolicyEngine, *,
                 workers: int = DEFAULT_WORKERS,
                 direction_defaults: dict[Direction, list[str]] | None = None):
        if workers < 1:
            raise ValidationError("BAD_WORKERS", f"workers must be >= 1, got {workers}")
        self.registry = registry
        self.engine = engine
        self._defaults = direction_defaults or {}
        self._pool = ThreadPoolExecutor(
            max_workers=workers, thread_name_prefix="guardgate-detector")

    def close(self) -> None:
        self._pool.shutdown(wait=False)

    def __enter__(self) -> "Orchestrator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- detector selection ----------------------------------------------------

    def applicable_detectors(self, req: ShieldRequest) -> list[str]:
        """Registry order filtered by the request allowlist, falling back to
        the configured per-direction defaults.  Empty selection is an error,
        never a silent pass."""
        ids = list(self.registry.ids())
        if req.detector_allowlist is not None:
            ids = [d for d in ids if d in req.detector_allowlist]
        elif req.direction in self._defaults:
            wanted = set(self._defaults[req.direction])
            ids = [d for d in ids if d in wanted]
        if not ids:
            raise ValidationError(
                "NO_DETECTORS_APPLICABLE",
                "no registered detector is applicable to this request")
        return ids

    # -- fan-out ----------------------------------------------------------------

    def run_detectors(self, req: ShieldRequest) -> OrchestrationContext:
        """Dispatch all applicable detectors concurrently and wait for every
        one of them, each under its own timeout budget."""
        ids = self.applicable_detectors(req)
        ctx = OrchestrationContext(request=req, started=time.perf_counter())
        futures = {}
        for det_id in ids:
            descriptor, impl = self.registry.get(det_id)
            futures[det_id] = (descriptor,
                               self._pool.submit(call_detector, descriptor,
                                                 impl, req.text))
        for det_id, (descriptor, future) in futures.items():
            deadline = ctx.started + descriptor.timeout_ms / 1000.0
            try:
                remaining = deadline - time.perf_counter()
                result = future.result(timeout=max(0.0, remaining))
            except FutureTimeout:
                future.cancel()
                logger.warning("detector %s timed out after %.0f ms",
                               det_id, descriptor.timeout_ms)
                result = DetectorResult(
                    det_id, (), float(descriptor.timeout_ms), ResultStatus.TIMEOUT)
            ctx.results[det_id] = result
        ctx.finished = time.perf_counter()
        return ctx

    # -- the full pipeline --------------------------------------------------------

    def shield(self, req: ShieldRequest) -> Verdict:
        """Validate, detect, and apply policies; returns the final verdict."""
        validate_request(
            req,
            known_policy_ids=self.engine.policy_ids(),
            policy_jurisdictions=self.engine.jurisdictions(),
        )
        ctx = self.run_detectors(req)
        findings = [f for r in ctx.results.values() for f in r.findings]
        degraded = ctx.degraded
        fail_closed = [
            d for d in degraded
            if self.registry.descriptor(d).fail_mode is FailMode.FAIL_CLOSED]
        timings = {d: r.elapsed_ms for d, r in ctx.results.items()}
        return self.engine.evaluate(
            req.text, findings,
            policy_ids=req.policy_ids,
            jurisdiction=req.jurisdiction,
            direction=req.direction,
            timings=timings,
            degraded=tuple(degraded),
            fail_closed=fail_closed,
        )
