"""PII extraction, checksum validators, context scoring and redaction.

Validator expectations were computed by hand: the Luhn sum of
4111 1111 1111 1111 is 30 (valid) and of ...1112 is 31 (invalid).
"""

import pytest

from guardgate.errors import ValidationError
from guardgate.model import ExtractionPair, Sensitivity, Span
from guardgate.pii import (
    PII_TYPES,
    MaskStyle,
    PiiDetector,
    date_valid,
    load_rulepack,
    luhn_valid,
    redact,
    resolve_overlaps,
    ssn_valid,
)


@pytest.fixture(scope="module")
def rules():
    return load_rulepack()


class TestLuhn:
    def test_known_valid(self):
        assert luhn_valid("4111 1111 1111 1111")
        assert luhn_valid("4111-1111-1111-1111")
        assert luhn_valid("378282246310005")  # 15-digit amex shape

    def test_known_invalid(self):
        assert not luhn_valid("4111 1111 1111 1112")  # sum 31

    def test_length_bounds(self):
        assert not luhn_valid("42")  # too short to be a pan
        assert not luhn_valid("0" * 20)


class TestSsnValidator:
    def test_plausible(self):
        assert ssn_valid("123-45-6789")

    @pytest.mark.parametrize("bad", [
        "000-45-6789",   # area 000 never issued
        "666-45-6789",   # area 666 never issued
        "912-34-5678",   # 9xx is the itin range, not ssn
        "123-00-6789",   # group 00
        "123-45-0000",   # serial 0000
    ])
    def test_rejects(self, bad):
        assert not ssn_valid(bad)


class TestDateValidator:
    @pytest.mark.parametrize("good", [
        "1990-02-28", "02/29/2000", "February 28, 1990", "July 4 1976",
    ])
    def test_real_dates(self, good):
        assert date_valid(good)

    @pytest.mark.parametrize("bad", [
        "1990-02-30", "02/29/2001", "February 30, 1990", "13/01/1990",
    ])
    def test_impossible_dates(self, bad):
        assert not date_valid(bad)


class TestExtraction:
    @pytest.mark.parametrize("text,pii_type,surface", [
        ("Call Maria Lopez about it.", "person_name", "Maria Lopez"),
        ("Meet Dr. Chen tomorrow.", "person_name", "Dr. Chen"),
        ("She lives at 42 Maple Street, Apt 7.", "street_address",
         "42 Maple Street, Apt 7"),
        ("Born 1987-06-15 in Ohio.", "date_of_birth", "1987-06-15"),
        ("DOB: 6/15/1987.", "date_of_birth", "6/15/1987"),
        ("Reach me at (415) 555-0134.", "phone_number", "(415) 555-0134"),
        ("Fax 212-555-0178 please.", "phone_number", "212-555-0178"),
        ("Email jane.doe@example.org today.", "email_address",
         "jane.doe@example.org"),
        ("Ping @jane_doe99 on the app.", "social_media_handle", "@jane_doe99"),
        ("Deposit to 1234567890 by Friday.", "bank_account_number",
         "1234567890"),
        ("Card 4111 1111 1111 1111 expires soon.", "credit_card_number",
         "4111 1111 1111 1111"),
        ("EIN 12-3456789 on file.", "tax_id", "12-3456789"),
        ("ITIN 912-34-5678 pending.", "tax_id", "912-34-5678"),
        ("SSN 123-45-6789 leaked.", "ssn", "123-45-6789"),
        ("Passport K12345678 checked.", "passport_number", "K12345678"),
        ("License D1234567 suspended.", "drivers_license_number", "D1234567"),
        ("Chart MRN-84729103 updated.", "health_identifier", "MRN-84729103"),
        ("Member ABC123456789 admitted.", "health_identifier", "ABC123456789"),
    ])
    def test_each_type(self, rules, text, pii_type, surface):
        pairs = rules.extract(text)
        hits = [(p.pii_type, p.surface) for p in pairs]
        assert (pii_type, surface) in hits
        (pair,) = [p for p in pairs if p.pii_type == pii_type]
        assert text[pair.span.start:pair.span.end] == pair.surface

    def test_all_13_types_covered(self):
        assert len(PII_TYPES) == 13

    def test_luhn_invalid_card_not_extracted(self, rules):
        assert rules.extract("Card 4111 1111 1111 1112 on file.") == []

    def test_impossible_date_not_extracted(self, rules):
        assert rules.extract("Logged 1990-02-30 as the date.") == []

    def test_itin_shape_is_not_ssn(self, rules):
        pairs = rules.extract("Number 912-34-5678 follows.")
        assert [p.pii_type for p in pairs] == ["tax_id"]

    def test_contained_match_of_other_type_dropped(self, rules):
        # The 10-digit run inside the MRN must not also surface as a
        # bank account number.
        pairs = rules.extract("Record MRN 1234567890 on file.")
        assert [p.pii_type for p in pairs] == ["health_identifier"]

    def test_same_type_overlap_keeps_longest(self, rules):
        pairs = rules.extract("Ask Dr. Maria Lopez directly.")
        names = [p for p in pairs if p.pii_type == "person_name"]
        assert [n.surface for n in names] == ["Dr. Maria Lopez"]

    def test_results_sorted_by_span(self, rules):
        text = "SSN 123-45-6789 and email a@b.co and card 4111111111111111."
        starts = [p.span.start for p in rules.extract(text)]
        assert starts == sorted(starts)

    def test_plain_prose_yields_nothing(self, rules):
        text = ("the quick brown fox jumps over the lazy dog and nothing "
                "here resembles an identifier at all")
        assert rules.extract(text) == []


class TestContextScoring:
    def test_positive_context_raises_one_level(self, rules):
        # private 0.75 + personal 0.75 + contact 0.5 = 2.0 > 1.5
        text = "Here is my private personal contact email: jane.doe@example.org."
        (pair,) = rules.analyze(text)
        assert pair.pii_type == "email_address"
        assert pair.sensitivity is Sensitivity.HIGH  # moderate raised

    def test_negative_context_lowers_one_level(self, rules):
        # support -0.75 + sales -0.75 + noreply -1.0 = -2.5 < -1.5
        text = "Our sales support noreply address is noreply@corp.example."
        (pair,) = rules.analyze(text)
        assert pair.sensitivity is Sensitivity.LOW  # moderate lowered

    def test_neutral_context_keeps_base(self, rules):
        (pair,) = rules.analyze("Write to jane.doe@example.org tomorrow.")
        assert pair.sensitivity is Sensitivity.MODERATE

    def test_raise_clamps_at_high(self, rules):
        # ssn terms: ssn 1.0 + social 0.75 + security 0.75 = 2.5 > 1.5,
        # but the base is already high.
        text = "My ssn, my social security number, is 123-45-6789."
        (pair,) = rules.analyze(text)
        assert pair.sensitivity is Sensitivity.HIGH

    def test_window_excludes_far_words(self, rules):
        # The trigger words sit 9+ words away, outside the 8-word window.
        filler = "one two three four five six seven eight nine"
        text = f"private personal contact {filler} jane.doe@example.org"
        (pair,) = rules.analyze(text)
        assert pair.sensitivity is Sensitivity.MODERATE


def _pair(text, surface, pii_type, sensitivity=Sensitivity.MODERATE):
    start = text.index(surface)
    return ExtractionPair(surface, pii_type, Span(start, start + len(surface)),
                          sensitivity)


class TestRedaction:
    def test_mask_type_placeholders(self, rules):
        text = "Email jane@x.org or call 212-555-0178."
        masked = redact(text, rules.extract(text))
        assert masked == "Email [EMAIL_ADDRESS] or call [PHONE_NUMBER]."

    def test_redact_full_preserves_length(self, rules):
        text = "Email jane@x.org now."
        masked = redact(text, rules.extract(text), style=MaskStyle.REDACT_FULL)
        assert masked == "Email " + "█" * len("jane@x.org") + " now."
        assert len(masked) == len(text)

    def test_right_to_left_replacement_keeps_offsets(self, rules):
        text = "a@b.co then c@d.co"
        masked = redact(text, rules.extract(text))
        assert masked == "[EMAIL_ADDRESS] then [EMAIL_ADDRESS]"

    def test_overlapping_spans_rejected(self):
        text = "abcdefghij"
        pairs = [_pair(text, "abcde", "ssn"), _pair(text, "cdefg", "tax_id")]
        with pytest.raises(ValidationError) as ei:
            redact(text, pairs)
        assert ei.value.code == "OVERLAPPING_SPANS"

    def test_resolve_overlaps_prefers_longest(self):
        text = "abcdefghij"
        pairs = [_pair(text, "abcde", "ssn"), _pair(text, "cdefghij", "tax_id")]
        kept = resolve_overlaps(pairs)
        assert [p.surface for p in kept] == ["cdefghij"]

    def test_mask_is_idempotent(self, rules):
        text = ("Alice Johnson, ssn 123-45-6789, card 4111 1111 1111 1111, "
                "mail alice@example.org, lives at 9 Oak Road.")
        once = redact(text, rules.extract(text))
        again = redact(once, rules.extract(once))
        assert again == once


class TestPiiDetector:
    def test_findings_shape(self, rules):
        det = PiiDetector(rules)
        findings = det("SSN 123-45-6789 leaked.")
        (f,) = findings
        assert f.category == "pii.ssn"
        assert f.detector_id == "pii"
        assert f.label == "ssn"
        assert f.score == rules.rule("ssn").confidence
        assert f.span == Span(4, 15)
        assert f.sensitivity is Sensitivity.HIGH

    def test_context_scored_sensitivity_flows_through(self, rules):
        det = PiiDetector(rules)
        (f,) = det("Here is my private personal contact email: j@x.org.")
        assert f.sensitivity is Sensitivity.HIGH

    def test_descriptor_categories(self, rules):
        desc = PiiDetector(rules).descriptor()
        assert "pii.ssn" in desc.categories
        assert len(desc.categories) == 13
