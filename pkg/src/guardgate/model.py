"""Shared domain vocabulary: requests, spans, findings, decisions, verdicts.

Every other component speaks in these types.  All values are immutable;
transformations return new objects.  Offsets everywhere are measured in
unicode code points of the original text, never bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import ValidationError

# ---------------------------------------------------------------------------
# enums

class Direction(str, Enum):
    """Which side of the model a text is on."""

    PROMPT = "prompt"
    RESPONSE = "response"


class Decision(str, Enum):
    """Verdict decision, totally ordered: BLOCK > MASK > WARN > PASS."""

    PASS = "pass"
    WARN = "warn"
    MASK = "mask"
    BLOCK = "block"

    @property
    def rank(self) -> int:
        return _DECISION_RANK[self]

    def combine(self, other: "Decision") -> "Decision":
        """The stricter of the two decisions."""
        return self if self.rank >= other.rank else other


_DECISION_RANK = {Decision.PASS: 0, Decision.WARN: 1, Decision.MASK: 2, Decision.BLOCK: 3}


class Sensitivity(str, Enum):
    """Privacy level of an extracted entity, ordered LOW < MODERATE < HIGH."""

    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _SENSITIVITY_RANK[self]

    def raised(self) -> "Sensitivity":
        return _SENSITIVITY_ORDER[min(self.rank + 1, 2)]

    def lowered(self) -> "Sensitivity":
        return _SENSITIVITY_ORDER[max(self.rank - 1, 0)]

    @staticmethod
    def strongest(levels: "Iterable[Sensitivity]") -> "Sensitivity":
        return max(levels, key=lambda s: s.rank)


_SENSITIVITY_RANK = {Sensitivity.LOW: 0, Sensitivity.MODERATE: 1, Sensitivity.HIGH: 2}
_SENSITIVITY_ORDER = (Sensitivity.LOW, Sensitivity.MODERATE, Sensitivity.HIGH)


# ---------------------------------------------------------------------------
# spans and text slicing

@dataclass(frozen=True, order=True)
class Span:
    """Half-open character range [start, end) into some text."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValidationError(
                "SPAN_OUT_OF_RANGE", f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end


def slice_text(text: str, span: Span) -> str:
    """The substring a span denotes.  Raises SPAN_OUT_OF_RANGE if it falls
    outside the text.  Python strings index by code point, which is exactly
    the offset unit spans use."""
    if span.end > len(text):
        raise ValidationError(
            "SPAN_OUT_OF_RANGE",
            f"span [{span.start}, {span.end}) exceeds text length {len(text)}")
    return text[span.start:span.end]


# ---------------------------------------------------------------------------
# findings

@dataclass(frozen=True)
class Finding:
    """One risk signal reported by a detector.

    ``category`` is a dotted tag such as ``pii.email_address``, ``hap`` or
    ``attribution``.  ``span`` is present for localized findings and absent
    for whole-text classifications.  ``score`` is detector confidence in
    [0, 1].
    """

    detector_id: str
    category: str
    score: float
    label: str
    span: Span | None = None
    sensitivity: Sensitivity | None = None
    evidence: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                "SCORE_OUT_OF_RANGE",
                f"finding score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class ExtractionPair:
    """A (surface text, pii type) pair located in the input."""

    surface: str
    pii_type: str
    span: Span
    sensitivity: Sensitivity


# ---------------------------------------------------------------------------
# requests and verdicts

_JURISDICTION_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*$")


@dataclass(frozen=True)
class ShieldRequest:
    """One text to vet, plus the policy context it is vetted under."""

    request_id: str
    text: str
    direction: Direction
    tenant: str = ""
    jurisdiction: str = "default"
    policy_ids: tuple[str, ...] = ()
    detector_allowlist: frozenset[str] | None = None


@dataclass(frozen=True)
class RuleFiring:
    """Audit record: one policy rule that matched, and what it matched."""

    policy_id: str
    rule_id: str
    action: Decision
    matched: tuple[Finding, ...] = ()
    message: str | None = None


@dataclass(frozen=True)
class Verdict:
    """Outcome of shielding one text."""

    decision: Decision
    output_text: str
    warnings: tuple[str, ...] = ()
    audit: tuple[RuleFiring, ...] = ()
    timings: Mapping[str, float] = field(default_factory=dict)
    degraded: tuple[str, ...] = ()


def validate_request(req: ShieldRequest, *, known_policy_ids,
                     policy_jurisdictions: Mapping[str, str] | None = None) -> None:
    """Reject a request before any detector runs.

    Raises ValidationError naming the first violated field: EMPTY_TEXT,
    BAD_JURISDICTION_TAG, or UNKNOWN_POLICY_ID.  A policy whose jurisdiction
    is neither ``default`` nor the request's tag cannot be evaluated and is
    reported as BAD_JURISDICTION_TAG.
    """
    if not req.text.strip():
        raise ValidationError("EMPTY_TEXT", "request text is empty")
    if not _JURISDICTION_RE.match(req.jurisdiction):
        raise ValidationError(
            "BAD_JURISDICTION_TAG", f"malformed jurisdiction tag {req.jurisdiction!r}")
    for pid in req.policy_ids:
        if pid not in known_policy_ids:
            raise ValidationError("UNKNOWN_POLICY_ID", f"unknown policy id {pid!r}")
    if policy_jurisdictions:
        for pid in req.policy_ids:
            tag = policy_jurisdictions.get(pid, "default")
            if tag not in ("default", req.jurisdiction):
                raise ValidationError(
                    "BAD_JURISDICTION_TAG",
                    f"policy {pid!r} is scoped to jurisdiction {tag!r}, "
                    f"request has {req.jurisdiction!r}")
