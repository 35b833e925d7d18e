"""Policy management: template loading/validation and the three-stage
evaluation pipeline (infer privacy levels, decide firings, act on them).

Templates are YAML documents; rule predicates use the grammar in
:mod:`guardgate.predicates`.  Evaluation never short-circuits: every rule of
every selected template is evaluated so the audit trail is complete, and
the decision is the maximum firing action under BLOCK > MASK > WARN > PASS,
falling back to the default action when nothing fires.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from . import predicates
from .errors import PolicyLoadError, ValidationError
from .model import (Decision, Direction, Finding, RuleFiring, Sensitivity,
                    Verdict)
from .pii import PII_CATEGORIES, MaskStyle, _BLOCK_CHAR
from .predicates import EvalContext, PredicateSyntaxError
from .sentences import sentence_spans

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_MESSAGE = "This text was blocked by policy."

_ACTIONS = {d.value: d for d in Decision}
_MASK_STYLES = {s.value: s for s in MaskStyle}


@dataclass(frozen=True)
class PolicyRule:
    rule_id: str
    predicate_src: str
    predicate: object
    action: Decision
    mask_style: MaskStyle = MaskStyle.MASK_TYPE
    message: str | None = None

    def category_patterns(self) -> frozenset[str]:
        return predicates.category_patterns(self.predicate)


@dataclass(frozen=True)
class PolicyTemplate:
    policy_id: str
    jurisdiction: str
    rules: tuple[PolicyRule, ...]
    default_action: Decision = Decision.PASS
    block_message: str = DEFAULT_BLOCK_MESSAGE
    privacy_overrides: Mapping[str, Sensitivity] = field(default_factory=dict)
    source: str = ""


@dataclass(frozen=True)
class PrivacyAssessment:
    """Per-finding privacy level and how it was arrived at."""

    levels: tuple[Sensitivity | None, ...]
    rationales: tuple[str, ...]


# ---------------------------------------------------------------------------
# template loading

def _rule_lines(text: str) -> list[int]:
    """1-based line number of each entry under the top-level rules key."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return []
    if not isinstance(root, yaml.MappingNode):
        return []
    for key_node, value_node in root.value:
        if getattr(key_node, "value", None) == "rules" and isinstance(
                value_node, yaml.SequenceNode):
            return [item.start_mark.line + 1 for item in value_node.value]
    return []


def parse_template(text: str, *, source_name: str = "<policy>") -> PolicyTemplate:
    """Parse and validate one policy document.

    The whole document is rejected on the first error, with position info:
    MALFORMED_POLICY, UNKNOWN_ACTION, DUPLICATE_RULE_ID or
    MALFORMED_PREDICATE.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise PolicyLoadError(
            "MALFORMED_POLICY", f"{source_name}: {exc.problem}", line=line) from exc
    if not isinstance(doc, dict):
        raise PolicyLoadError(
            "MALFORMED_POLICY", f"{source_name}: document must be a mapping")
    policy_id = doc.get("policy_id")
    if not isinstance(policy_id, str) or not policy_id:
        raise PolicyLoadError(
            "MALFORMED_POLICY", f"{source_name}: policy_id missing or not a string")
    jurisdiction = doc.get("jurisdiction", "default")
    if not isinstance(jurisdiction, str):
        raise PolicyLoadError(
            "MALFORMED_POLICY", f"{source_name}: jurisdiction must be a string")
    default_action = str(doc.get("default_action", "pass"))
    if default_action not in _ACTIONS:
        raise PolicyLoadError(
            "UNKNOWN_ACTION",
            f"{source_name}: unknown default_action {default_action!r}")
    overrides = {}
    for cat, level in (doc.get("privacy_overrides") or {}).items():
        try:
            overrides[str(cat)] = Sensitivity(level)
        except ValueError:
            raise PolicyLoadError(
                "MALFORMED_POLICY",
                f"{source_name}: bad privacy level {level!r} for {cat}") from None

    raw_rules = doc.get("rules")
    if not isinstance(raw_rules, list) or not raw_rules:
        raise PolicyLoadError(
            "MALFORMED_POLICY", f"{source_name}: rules must be a non-empty list")
    lines = _rule_lines(text)

    rules = []
    seen_ids = set()
    for i, raw in enumerate(raw_rules):
        line = lines[i] if i < len(lines) else None
        if not isinstance(raw, dict):
            raise PolicyLoadError(
                "MALFORMED_POLICY", f"{source_name}: rule {i} is not a mapping",
                line=line)
        rule_id = raw.get("rule_id")
        if not isinstance(rule_id, str) or not rule_id:
            raise PolicyLoadError(
                "MALFORMED_POLICY",
                f"{source_name}: rule {i} has no rule_id", line=line)
        if rule_id in seen_ids:
            raise PolicyLoadError(
                "DUPLICATE_RULE_ID",
                f"{source_name}: duplicate rule id {rule_id!r}", line=line)
        seen_ids.add(rule_id)
        action_name = str(raw.get("action", ""))
        if action_name not in _ACTIONS:
            raise PolicyLoadError(
                "UNKNOWN_ACTION",
                f"{source_name}: rule {rule_id!r} has unknown action "
                f"{action_name!r}", line=line)
        action = _ACTIONS[action_name]
        style_name = str(raw.get("mask_style", MaskStyle.MASK_TYPE.value))
        if style_name not in _MASK_STYLES:
            raise PolicyLoadError(
                "MALFORMED_POLICY",
                f"{source_name}: rule {rule_id!r} has unknown mask_style "
                f"{style_name!r}", line=line)
        src = raw.get("predicate")
        if not isinstance(src, str) or not src.strip():
            raise PolicyLoadError(
                "MALFORMED_PREDICATE",
                f"{source_name}: rule {rule_id!r} has no predicate", line=line)
        try:
            node = predicates.parse(src)
        except PredicateSyntaxError as exc:
            raise PolicyLoadError(
                "MALFORMED_PREDICATE",
                f"{source_name}: rule {rule_id!r}: {exc}", line=line,
                column=exc.column) from exc
        if action is Decision.MASK:
            patterns = predicates.category_patterns(node)
            maskable = any(
                fnmatchcase(cat, pat) for pat in patterns for cat in PII_CATEGORIES)
            if not maskable:
                raise PolicyLoadError(
                    "MALFORMED_PREDICATE",
                    f"{source_name}: MASK rule {rule_id!r} must name at least "
                    "one extraction category (only spanned findings can be "
                    "masked)", line=line)
        message = raw.get("message")
        rules.append(PolicyRule(
            rule_id, src, node, action, _MASK_STYLES[style_name],
            str(message) if message is not None else None))

    return PolicyTemplate(
        policy_id=policy_id,
        jurisdiction=jurisdiction,
        rules=tuple(rules),
        default_action=_ACTIONS[default_action],
        block_message=str(doc.get("block_message", DEFAULT_BLOCK_MESSAGE)),
        privacy_overrides=overrides,
        source=text,
    )


def load_policy_file(path: str | Path) -> PolicyTemplate:
    p = Path(path)
    return parse_template(p.read_text(encoding="utf-8"), source_name=p.name)


def load_policy_dir(path: str | Path) -> dict[str, PolicyTemplate]:
    """Load every *.yaml/*.yml in a directory, keyed by policy id."""
    out: dict[str, PolicyTemplate] = {}
    for p in sorted(Path(path).glob("*.y*ml")):
        t = load_policy_file(p)
        if t.policy_id in out:
            raise PolicyLoadError(
                "DUPLICATE_POLICY_ID",
                f"{p.name}: policy id {t.policy_id!r} already loaded")
        out[t.policy_id] = t
    return out


def builtin_policies() -> dict[str, PolicyTemplate]:
    """The example templates shipped with the package."""
    out = {}
    root = resources.files("guardgate").joinpath("data/policies")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            t = parse_template(entry.read_text(encoding="utf-8"),
                               source_name=entry.name)
            out[t.policy_id] = t
    return out


def builtin_jurisdiction_overrides() -> dict[str, dict[str, Sensitivity]]:
    """Category -> minimum level tables shipped for gdpr and ccpa."""
    out: dict[str, dict[str, Sensitivity]] = {}
    root = resources.files("guardgate").joinpath("data/jurisdictions")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".yaml"):
            continue
        doc = yaml.safe_load(entry.read_text(encoding="utf-8"))
        tag = str(doc["jurisdiction"])
        out[tag] = {str(c): Sensitivity(l) for c, l in (doc.get("levels") or {}).items()}
    return out


def load_jurisdiction_dir(path: str | Path) -> dict[str, dict[str, Sensitivity]]:
    out: dict[str, dict[str, Sensitivity]] = {}
    for p in sorted(Path(path).glob("*.y*ml")):
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
        tag = str(doc["jurisdiction"])
        out[tag] = {str(c): Sensitivity(l) for c, l in (doc.get("levels") or {}).items()}
    return out


# ---------------------------------------------------------------------------
# evaluation

class PolicyEngine:
    """Holds the loaded templates and jurisdiction tables; evaluates verdicts.

    The template set can be swapped at runtime (policy management API); a
    snapshot is taken per evaluation so in-flight requests see a consistent
    set.
    """

    def __init__(self, templates: Iterable[PolicyTemplate] = (),
                 overrides: Mapping[str, Mapping[str, Sensitivity]] | None = None):
        self._templates: dict[str, PolicyTemplate] = {
            t.policy_id: t for t in templates}
        self._overrides = {tag: dict(rows) for tag, rows in
                           (overrides if overrides is not None
                            else builtin_jurisdiction_overrides()).items()}

    # -- template management --------------------------------------------------

    def policy_ids(self) -> list[str]:
        return list(self._templates)

    def get(self, policy_id: str) -> PolicyTemplate:
        try:
            return self._templates[policy_id]
        except KeyError:
            raise ValidationError(
                "UNKNOWN_POLICY_ID", f"unknown policy id {policy_id!r}") from None

    def jurisdictions(self) -> dict[str, str]:
        return {pid: t.jurisdiction for pid, t in self._templates.items()}

    def upsert(self, template: PolicyTemplate) -> None:
        updated = dict(self._templates)
        updated[template.policy_id] = template
        self._templates = updated

    def remove(self, policy_id: str) -> None:
        if policy_id not in self._templates:
            raise ValidationError(
                "UNKNOWN_POLICY_ID", f"unknown policy id {policy_id!r}")
        updated = dict(self._templates)
        del updated[policy_id]
        self._templates = updated

    def __contains__(self, policy_id: str) -> bool:
        return policy_id in self._templates

    # -- stage 1: infer --------------------------------------------------------

    def infer(self, findings: Sequence[Finding], template: PolicyTemplate,
              jurisdiction: str) -> PrivacyAssessment:
        """Assessed privacy level per finding: for extraction findings the
        maximum of the detector level and the jurisdiction/template override
        row; classification findings pass through unchanged."""
        table = dict(self._overrides.get(jurisdiction, {}))
        table.update(template.privacy_overrides)
        levels: list[Sensitivity | None] = []
        rationales: list[str] = []
        for f in findings:
            if f.category.startswith("pii."):
                base = f.sensitivity or Sensitivity.LOW
                override = table.get(f.category)
                if override is not None and override.rank > base.rank:
                    levels.append(override)
                    rationales.append(f"jurisdiction:{jurisdiction}")
                else:
                    levels.append(base)
                    rationales.append("detector")
            else:
                levels.append(f.sensitivity)
                rationales.append("detector")
        return PrivacyAssessment(tuple(levels), tuple(rationales))

    # -- stage 2: decide -------------------------------------------------------

    def decide(self, findings: Sequence[Finding], assessment: PrivacyAssessment,
               template: PolicyTemplate, direction: Direction,
               text: str = "") -> list[RuleFiring]:
        """Evaluate every rule (no short-circuit) and return the firings."""
        ctx = EvalContext(
            findings=findings,
            levels=assessment.levels,
            direction=direction,
            sentences=sentence_spans(text) if text else (),
        )
        firings = []
        for rule in template.rules:
            ok, matched = predicates.evaluate(rule.predicate, ctx)
            if ok:
                firings.append(RuleFiring(
                    policy_id=template.policy_id,
                    rule_id=rule.rule_id,
                    action=rule.action,
                    matched=tuple(findings[i] for i in sorted(matched)),
                    message=rule.message,
                ))
        return firings

    # -- stage 3: act ----------------------------------------------------------

    def act(self, text: str, firings: Sequence[RuleFiring],
            template: PolicyTemplate, *, timings: Mapping[str, float] | None = None,
            degraded: Sequence[str] = ()) -> Verdict:
        """Apply firings from a single template to the text."""
        if firings:
            decision = max((f.action for f in firings), key=lambda a: a.rank)
        else:
            decision = template.default_action
        return self._apply(text, decision, list(firings),
                           {template.policy_id: template},
                           first_template=template, timings=timings,
                           degraded=degraded)

    def _mask_styles(self, templates: Mapping[str, PolicyTemplate],
                     firing: RuleFiring) -> MaskStyle:
        template = templates.get(firing.policy_id)
        if template is None:
            return MaskStyle.MASK_TYPE
        for rule in template.rules:
            if rule.rule_id == firing.rule_id:
                return rule.mask_style
        return MaskStyle.MASK_TYPE

    def _apply(self, text: str, decision: Decision, firings: list[RuleFiring],
               templates: Mapping[str, PolicyTemplate], *,
               first_template: PolicyTemplate | None,
               timings: Mapping[str, float] | None,
               degraded: Sequence[str]) -> Verdict:
        warnings = tuple(
            f.message for f in firings
            if f.action is Decision.WARN and f.message)
        output = text
        if decision is Decision.BLOCK:
            output = self._block_message(firings, templates, first_template)
        elif decision is Decision.MASK:
            output = self._masked(text, firings, templates)
        return Verdict(
            decision=decision,
            output_text=output,
            warnings=warnings,
            audit=tuple(firings),
            timings=dict(timings or {}),
            degraded=tuple(degraded),
        )

    def _block_message(self, firings, templates, first_template) -> str:
        for f in firings:
            if f.action is Decision.BLOCK and f.policy_id in templates:
                return templates[f.policy_id].block_message
        if first_template is not None:
            return first_template.block_message
        return DEFAULT_BLOCK_MESSAGE

    def _masked(self, text: str, firings: Sequence[RuleFiring],
                templates: Mapping[str, PolicyTemplate]) -> str:
        # Gather (span, placeholder label, style) for every spanned finding a
        # MASK rule matched; REDACT_FULL wins when rules disagree on a span.
        segments: dict[tuple[int, int], tuple[str, MaskStyle, int]] = {}
        for firing in firings:
            if firing.action is not Decision.MASK:
                continue
            style = self._mask_styles(templates, firing)
            for f in firing.matched:
                if f.span is None:
                    continue
                key = (f.span.start, f.span.end)
                label = f.category.removeprefix("pii.").replace(".", "_").upper()
                prev = segments.get(key)
                if prev is None or (style is MaskStyle.REDACT_FULL
                                    and prev[1] is MaskStyle.MASK_TYPE):
                    segments[key] = (label, style, len(f.span))
        if not segments:
            return text
        # sweep-merge overlapping spans into clusters; the longest member
        # names the placeholder, REDACT_FULL is contagious within a cluster
        raw = sorted(((s, e, label, style)
                      for (s, e), (label, style, _) in segments.items()),
                     key=lambda seg: (seg[0], seg[1]))
        kept: list[tuple[int, int, str, MaskStyle]] = []
        for start, end, label, style in raw:
            if kept and start < kept[-1][1]:
                ps, pe, plabel, pstyle = kept[-1]
                if end - start > pe - ps:
                    plabel = label
                if style is MaskStyle.REDACT_FULL:
                    pstyle = MaskStyle.REDACT_FULL
                kept[-1] = (ps, max(pe, end), plabel, pstyle)
            else:
                kept.append((start, end, label, style))
        out = text
        for start, end, label, style in reversed(kept):
            if style is MaskStyle.MASK_TYPE:
                replacement = f"[{label}]"
            else:
                replacement = _BLOCK_CHAR * (end - start)
            out = out[:start] + replacement + out[end:]
        return out

    # -- combined entry point --------------------------------------------------

    def evaluate(self, text: str, findings: Sequence[Finding], *,
                 policy_ids: Sequence[str], jurisdiction: str = "default",
                 direction: Direction = Direction.PROMPT,
                 timings: Mapping[str, float] | None = None,
                 degraded: Sequence[str] = (),
                 fail_closed: Sequence[str] = ()) -> Verdict:
        """Evaluate all selected templates and combine into one verdict.

        Decisions combine by maximum.  A degraded fail-closed detector
        injects a synthetic BLOCK firing: without its findings the text
        cannot be proven safe.
        """
        snapshot = self._templates
        templates: dict[str, PolicyTemplate] = {}
        for pid in policy_ids:
            if pid not in snapshot:
                raise ValidationError(
                    "UNKNOWN_POLICY_ID", f"unknown policy id {pid!r}")
            templates[pid] = snapshot[pid]

        firings: list[RuleFiring] = []
        for pid, template in templates.items():
            assessment = self.infer(findings, template, jurisdiction)
            firings.extend(
                self.decide(findings, assessment, template, direction, text))
        for detector_id in fail_closed:
            firings.append(RuleFiring(
                policy_id="system",
                rule_id=f"fail-closed:{detector_id}",
                action=Decision.BLOCK,
                matched=(),
                message=f"detector {detector_id} degraded and fails closed",
            ))

        first = next(iter(templates.values()), None)
        if firings:
            decision = max((f.action for f in firings), key=lambda a: a.rank)
        elif templates:
            decision = max((t.default_action for t in templates.values()),
                           key=lambda a: a.rank)
        else:
            decision = Decision.PASS
        return self._apply(text, decision, firings, templates,
                           first_template=first, timings=timings,
                           degraded=degraded)
