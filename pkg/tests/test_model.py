"""Core value types: decisions, sensitivity, spans, findings, validation."""

import pytest

from guardgate.errors import ValidationError
from guardgate.model import (
    Decision,
    Direction,
    Finding,
    Sensitivity,
    ShieldRequest,
    Span,
    slice_text,
    validate_request,
)


class TestDecision:
    def test_total_order(self):
        assert Decision.PASS.rank < Decision.WARN.rank
        assert Decision.WARN.rank < Decision.MASK.rank
        assert Decision.MASK.rank < Decision.BLOCK.rank

    def test_combine_takes_maximum(self):
        assert Decision.PASS.combine(Decision.WARN) is Decision.WARN
        assert Decision.BLOCK.combine(Decision.MASK) is Decision.BLOCK
        assert Decision.MASK.combine(Decision.MASK) is Decision.MASK

    def test_combine_commutes(self):
        for a in Decision:
            for b in Decision:
                assert a.combine(b) is b.combine(a)

    def test_string_values(self):
        assert Decision.BLOCK.value == "block"
        assert Decision("warn") is Decision.WARN


class TestSensitivity:
    def test_raise_and_lower_clamp(self):
        assert Sensitivity.LOW.raised() is Sensitivity.MODERATE
        assert Sensitivity.HIGH.raised() is Sensitivity.HIGH
        assert Sensitivity.MODERATE.lowered() is Sensitivity.LOW
        assert Sensitivity.LOW.lowered() is Sensitivity.LOW

    def test_strongest(self):
        assert Sensitivity.strongest(
            [Sensitivity.LOW, Sensitivity.HIGH, Sensitivity.MODERATE]
        ) is Sensitivity.HIGH


class TestSpan:
    def test_valid_span(self):
        s = Span(2, 5)
        assert len(s) == 3

    @pytest.mark.parametrize("start,end", [(-1, 3), (3, 3), (5, 2)])
    def test_rejects_degenerate(self, start, end):
        with pytest.raises(ValidationError) as ei:
            Span(start, end)
        assert ei.value.code == "SPAN_OUT_OF_RANGE"

    def test_overlaps(self):
        assert Span(0, 5).overlaps(Span(4, 9))
        assert not Span(0, 5).overlaps(Span(5, 9))  # half-open, touching is disjoint

    def test_contains(self):
        assert Span(0, 10).contains(Span(2, 5))
        assert Span(0, 10).contains(Span(0, 10))
        assert not Span(2, 5).contains(Span(0, 10))

    def test_slice_text(self):
        assert slice_text("hello world", Span(6, 11)) == "world"

    def test_slice_text_out_of_range(self):
        with pytest.raises(ValidationError) as ei:
            slice_text("abc", Span(1, 7))
        assert ei.value.code == "SPAN_OUT_OF_RANGE"


class TestFinding:
    def test_score_bounds(self):
        Finding("d", "cat", 0.0, "x")
        Finding("d", "cat", 1.0, "x")
        with pytest.raises(ValidationError) as ei:
            Finding("d", "cat", 1.5, "x")
        assert ei.value.code == "SCORE_OUT_OF_RANGE"
        with pytest.raises(ValidationError):
            Finding("d", "cat", -0.1, "x")

    def test_optional_fields_default(self):
        f = Finding("d", "cat", 0.5, "x")
        assert f.span is None and f.sensitivity is None and f.evidence is None


def _req(**kw):
    base = dict(request_id="r", text="hello", direction=Direction.PROMPT)
    base.update(kw)
    return ShieldRequest(**base)


class TestValidateRequest:
    def test_empty_text(self):
        with pytest.raises(ValidationError) as ei:
            validate_request(_req(text="   "), known_policy_ids={"default"})
        assert ei.value.code == "EMPTY_TEXT"

    def test_unknown_policy(self):
        with pytest.raises(ValidationError) as ei:
            validate_request(_req(policy_ids=("nope",)),
                             known_policy_ids={"default"})
        assert ei.value.code == "UNKNOWN_POLICY_ID"

    @pytest.mark.parametrize("tag", ["GDPR", "eu west", "-lead", ""])
    def test_bad_jurisdiction_tag(self, tag):
        with pytest.raises(ValidationError) as ei:
            validate_request(_req(jurisdiction=tag),
                             known_policy_ids={"default"})
        assert ei.value.code == "BAD_JURISDICTION_TAG"

    def test_policy_scoped_to_other_jurisdiction(self):
        # A gdpr-only policy cannot be applied under ccpa.
        with pytest.raises(ValidationError) as ei:
            validate_request(
                _req(policy_ids=("strict",), jurisdiction="ccpa"),
                known_policy_ids={"strict"},
                policy_jurisdictions={"strict": "gdpr"},
            )
        assert ei.value.code == "BAD_JURISDICTION_TAG"

    def test_default_scoped_policy_is_universal(self):
        validate_request(
            _req(policy_ids=("p",), jurisdiction="gdpr"),
            known_policy_ids={"p"},
            policy_jurisdictions={"p": "default"},
        )

    def test_clean_request_passes(self):
        validate_request(_req(policy_ids=("default",), jurisdiction="gdpr"),
                         known_policy_ids={"default"})
