"""JSON wire formats for the HTTP service and machine-readable reports.

Core domain types stay serialization-free; everything crossing a process
boundary converts here.
"""

from __future__ import annotations

import uuid
from typing import Any, Mapping

from .errors import ValidationError
from .model import (Decision, Direction, Finding, RuleFiring, Sensitivity,
                    ShieldRequest, Span, Verdict)


def span_to_dict(span: Span | None) -> dict | None:
    if span is None:
        return None
    return {"start": span.start, "end": span.end}


def finding_to_dict(f: Finding) -> dict:
    return {
        "detector_id": f.detector_id,
        "category": f.category,
        "score": f.score,
        "label": f.label,
        "span": span_to_dict(f.span),
        "sensitivity": f.sensitivity.value if f.sensitivity else None,
        "evidence": f.evidence,
    }


def firing_to_dict(firing: RuleFiring) -> dict:
    return {
        "policy_id": firing.policy_id,
        "rule_id": firing.rule_id,
        "action": firing.action.value,
        "matched": [finding_to_dict(f) for f in firing.matched],
        "message": firing.message,
    }


def verdict_to_dict(v: Verdict) -> dict:
    return {
        "decision": v.decision.value,
        "output_text": v.output_text,
        "warnings": list(v.warnings),
        "audit": [firing_to_dict(f) for f in v.audit],
        "timings": dict(v.timings),
        "degraded": list(v.degraded),
    }


def shield_request_from_payload(payload: Any, direction: Direction,
                                default_policy_ids: tuple[str, ...] = ()) -> ShieldRequest:
    """Build a ShieldRequest from a decoded JSON body.

    Malformed shapes raise MALFORMED_REQUEST; semantic checks (empty text,
    unknown policy) stay with validate_request.
    """
    if not isinstance(payload, Mapping):
        raise ValidationError("MALFORMED_REQUEST", "body must be a JSON object")
    text = payload.get("text")
    if not isinstance(text, str):
        raise ValidationError("MALFORMED_REQUEST", "'text' must be a string")
    policy_ids = payload.get("policy_ids")
    if policy_ids is None:
        resolved = default_policy_ids
    elif isinstance(policy_ids, list) and all(isinstance(p, str) for p in policy_ids):
        resolved = tuple(policy_ids)
    else:
        raise ValidationError("MALFORMED_REQUEST", "'policy_ids' must be a string list")
    detectors = payload.get("detectors")
    allowlist = None
    if detectors is not None:
        if not isinstance(detectors, list) or not all(
                isinstance(d, str) for d in detectors):
            raise ValidationError(
                "MALFORMED_REQUEST", "'detectors' must be a string list")
        allowlist = frozenset(detectors)
    return ShieldRequest(
        request_id=uuid.uuid4().hex,
        text=text,
        direction=direction,
        tenant=str(payload.get("tenant", "")),
        jurisdiction=str(payload.get("jurisdiction", "default")),
        policy_ids=resolved,
        detector_allowlist=allowlist,
    )
