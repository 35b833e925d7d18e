"""PII extraction: pattern rules, checksum validators, contextual
sensitivity scoring, and span redaction.

Rule packs are YAML data files (see data/rulepacks/default.yaml); a rule is
one or more compiled patterns plus an optional named validator that rejects
structurally valid but checksum-invalid surfaces (a card number that fails
Luhn must produce no finding at all).
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping

import yaml

from .detectors import DetectorDescriptor, DetectorKind, FailMode
from .errors import ValidationError
from .model import ExtractionPair, Finding, Sensitivity, Span, slice_text
from .tokenization import word_spans

# The 13 supported pii types, in rule-pack order.
PII_TYPES = (
    "person_name",
    "street_address",
    "date_of_birth",
    "phone_number",
    "email_address",
    "social_media_handle",
    "bank_account_number",
    "credit_card_number",
    "tax_id",
    "ssn",
    "passport_number",
    "drivers_license_number",
    "health_identifier",
)

PII_CATEGORIES = tuple(f"pii.{t}" for t in PII_TYPES)


# ---------------------------------------------------------------------------
# validators

def luhn_valid(surface: str) -> bool:
    """Luhn checksum over the digits of ``surface`` (13-19 digits)."""
    digits = [int(c) for c in surface if c.isdigit()]
    if not 13 <= len(digits) <= 19:
        return False
    total = 0
    for i, d in enumerate(reversed(digits)):
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def ssn_valid(surface: str) -> bool:
    """Structural SSN check: area not 000/666/9xx, group not 00,
    serial not 0000."""
    m = re.fullmatch(r"(\d{3})-(\d{2})-(\d{4})", surface)
    if not m:
        return False
    area, group, serial = m.groups()
    if area == "000" or area == "666" or area.startswith("9"):
        return False
    return group != "00" and serial != "0000"


_MONTHS = {name: i for i, name in enumerate(
    ("January", "February", "March", "April", "May", "June", "July",
     "August", "September", "October", "November", "December"), start=1)}


def date_valid(surface: str) -> bool:
    """True when the surface is a real calendar date in one of the
    supported forms (ISO, M/D/YYYY, or 'Month D, YYYY')."""
    s = surface.strip()
    m = re.fullmatch(r"(\d{4})-(\d{1,2})-(\d{1,2})", s)
    if m:
        y, mo, d = (int(g) for g in m.groups())
    else:
        m = re.fullmatch(r"(\d{1,2})/(\d{1,2})/(\d{4})", s)
        if m:
            mo, d, y = (int(g) for g in m.groups())
        else:
            m = re.fullmatch(r"([A-Za-z]+)\s+(\d{1,2}),?\s+(\d{4})", s)
            if not m or m.group(1) not in _MONTHS:
                return False
            mo, d, y = _MONTHS[m.group(1)], int(m.group(2)), int(m.group(3))
    try:
        datetime.date(y, mo, d)
    except ValueError:
        return False
    return True


VALIDATORS: dict[str, Callable[[str], bool]] = {
    "luhn": luhn_valid,
    "ssn": ssn_valid,
    "date": date_valid,
}


# ---------------------------------------------------------------------------
# rule pack

@dataclass(frozen=True)
class PiiRule:
    """Matching rules for a single pii type."""

    pii_type: str
    patterns: tuple[re.Pattern, ...]
    sensitivity: Sensitivity
    confidence: float
    validator: Callable[[str], bool] | None
    context_terms: Mapping[str, float]
    context_window: int
    context_threshold: float


def _given_names_alternation() -> str:
    data = resources.files("guardgate").joinpath("data/given_names.txt")
    names = [line.strip() for line in data.read_text(encoding="utf-8").splitlines()
             if line.strip() and not line.startswith("#")]
    names.sort(key=len, reverse=True)
    return "(?:" + "|".join(re.escape(n) for n in names) + ")"


class PiiRuleSet:
    """An ordered collection of pii rules loaded from a rule pack."""

    def __init__(self, rules: Iterable[PiiRule]):
        self.rules = tuple(rules)
        self._by_type = {r.pii_type: r for r in self.rules}

    def rule(self, pii_type: str) -> PiiRule:
        try:
            return self._by_type[pii_type]
        except KeyError:
            raise ValidationError(
                "UNKNOWN_PII_TYPE", f"no rule for pii type {pii_type!r}") from None

    def categories(self) -> tuple[str, ...]:
        return tuple(f"pii.{r.pii_type}" for r in self.rules)

    # -- extraction ---------------------------------------------------------

    def extract(self, text: str) -> list[ExtractionPair]:
        """All validated pii matches, sorted by span start.

        Overlapping matches of the same type collapse to the longest one.
        A match strictly contained in a longer match of another type is
        dropped (the address wins over the name embedded in it).
        """
        raw: list[tuple[PiiRule, int, int]] = []
        for rule in self.rules:
            seen: list[tuple[int, int]] = []
            candidates: list[tuple[int, int]] = []
            for pattern in rule.patterns:
                for m in pattern.finditer(text):
                    if m.start() == m.end():
                        continue
                    if rule.validator and not rule.validator(m.group()):
                        continue
                    candidates.append((m.start(), m.end()))
            # longest-first keeps the widest variant of the same entity
            candidates.sort(key=lambda c: (c[0] - c[1], c[0]))
            for start, end in candidates:
                if any(start < e and s < end for s, e in seen):
                    continue
                seen.append((start, end))
                raw.append((rule, start, end))

        kept: list[tuple[PiiRule, int, int]] = []
        for rule, start, end in raw:
            contained = any(
                (s <= start and end <= e) and (e - s > end - start)
                for r2, s, e in raw if r2.pii_type != rule.pii_type)
            if not contained:
                kept.append((rule, start, end))

        kept.sort(key=lambda item: (item[1], item[2], item[0].pii_type))
        return [
            ExtractionPair(text[s:e], rule.pii_type, Span(s, e), rule.sensitivity)
            for rule, s, e in kept
        ]

    # -- contextual sensitivity ---------------------------------------------

    def score_context(self, text: str, pair: ExtractionPair) -> Sensitivity:
        """Adjust a pair's sensitivity from nearby context words.

        The weighted sum over a window of N words on each side of the span
        raises the level one step when it exceeds the threshold, lowers it
        one step below the negated threshold, and leaves it alone otherwise.
        The result is clamped to [LOW, HIGH].
        """
        rule = self.rule(pair.pii_type)
        if not rule.context_terms:
            return pair.sensitivity
        spans = word_spans(text)
        left = [s for s in spans if s.end <= pair.span.start][-rule.context_window:]
        right = [s for s in spans if s.start >= pair.span.end][:rule.context_window]
        total = 0.0
        for s in left + right:
            total += rule.context_terms.get(text[s.start:s.end].lower(), 0.0)
        if total > rule.context_threshold:
            return pair.sensitivity.raised()
        if total < -rule.context_threshold:
            return pair.sensitivity.lowered()
        return pair.sensitivity

    def analyze(self, text: str) -> list[ExtractionPair]:
        """Extract and context-score in one pass."""
        out = []
        for pair in self.extract(text):
            level = self.score_context(text, pair)
            if level is not pair.sensitivity:
                pair = ExtractionPair(pair.surface, pair.pii_type, pair.span, level)
            out.append(pair)
        return out


def load_rulepack(source: str | Path = "default") -> PiiRuleSet:
    """Load a rule pack from a YAML file, or the packaged default."""
    if source == "default":
        text = resources.files("guardgate").joinpath(
            "data/rulepacks/default.yaml").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "pii_types" not in doc:
        raise ValidationError("MALFORMED_RULEPACK", f"rule pack {source}: no pii_types")
    defaults = doc.get("defaults", {})
    window = int(defaults.get("context_window", 8))
    threshold = float(defaults.get("context_threshold", 1.5))
    names = None
    rules = []
    for pii_type, entry in doc["pii_types"].items():
        patterns = []
        for src in entry["patterns"]:
            if "{GIVEN_NAMES}" in src:
                if names is None:
                    names = _given_names_alternation()
                src = src.replace("{GIVEN_NAMES}", names)
            patterns.append(re.compile(src))
        validator_name = entry.get("validator", "none")
        if validator_name != "none" and validator_name not in VALIDATORS:
            raise ValidationError(
                "MALFORMED_RULEPACK", f"unknown validator {validator_name!r}")
        rules.append(PiiRule(
            pii_type=pii_type,
            patterns=tuple(patterns),
            sensitivity=Sensitivity(entry.get("sensitivity", "moderate")),
            confidence=float(entry.get("confidence", 0.9)),
            validator=VALIDATORS.get(validator_name),
            context_terms={k.lower(): float(v)
                           for k, v in (entry.get("context_terms") or {}).items()},
            context_window=int(entry.get("context_window", window)),
            context_threshold=float(entry.get("context_threshold", threshold)),
        ))
    return PiiRuleSet(rules)


# ---------------------------------------------------------------------------
# redaction

class MaskStyle(str, Enum):
    MASK_TYPE = "mask_type"
    REDACT_FULL = "redact_full"


_BLOCK_CHAR = "█"


def resolve_overlaps(pairs: Iterable[ExtractionPair]) -> list[ExtractionPair]:
    """Reduce pairs to a non-overlapping set: longest span wins, ties to the
    earlier start, then lexicographic pii type."""
    ordered = sorted(pairs, key=lambda p: (-len(p.span), p.span.start, p.pii_type))
    kept: list[ExtractionPair] = []
    for pair in ordered:
        if not any(pair.span.overlaps(k.span) for k in kept):
            kept.append(pair)
    kept.sort(key=lambda p: p.span.start)
    return kept


def redact(text: str, pairs: Iterable[ExtractionPair],
           style: MaskStyle = MaskStyle.MASK_TYPE) -> str:
    """Replace pii spans right-to-left.

    MASK_TYPE substitutes ``[<PII_TYPE>]``; REDACT_FULL substitutes a block
    character per code point, preserving length.  Spans must be valid and
    pairwise non-overlapping (see :func:`resolve_overlaps`); overlap raises
    OVERLAPPING_SPANS.
    """
    items = sorted(pairs, key=lambda p: p.span.start)
    for a, b in zip(items, items[1:]):
        if a.span.overlaps(b.span):
            raise ValidationError(
                "OVERLAPPING_SPANS",
                f"spans {a.span} and {b.span} overlap; merge before redacting")
    out = text
    for pair in reversed(items):
        slice_text(out, pair.span)  # bounds check against current text
        if style is MaskStyle.MASK_TYPE:
            replacement = f"[{pair.pii_type.upper()}]"
        else:
            replacement = _BLOCK_CHAR * len(pair.span)
        out = out[:pair.span.start] + replacement + out[pair.span.end:]
    return out


# ---------------------------------------------------------------------------
# detector wrapper

class PiiDetector:
    """Extraction detector over a rule set; emits one finding per pair."""

    def __init__(self, rules: PiiRuleSet | None = None, detector_id: str = "pii"):
        self.rules = rules or load_rulepack()
        self.detector_id = detector_id

    def descriptor(self, timeout_ms: float = 2000.0,
                   fail_mode: FailMode = FailMode.FAIL_OPEN) -> DetectorDescriptor:
        return DetectorDescriptor(
            self.detector_id, DetectorKind.EXTRACTION,
            frozenset(self.rules.categories()), timeout_ms, fail_mode)

    def __call__(self, text: str) -> list[Finding]:
        out = []
        for pair in self.rules.analyze(text):
            rule = self.rules.rule(pair.pii_type)
            out.append(Finding(
                detector_id=self.detector_id,
                category=f"pii.{pair.pii_type}",
                score=rule.confidence,
                label=pair.pii_type,
                span=pair.span,
                sensitivity=pair.sensitivity,
            ))
        return out
