"""Keyword lexicons: tf-idf induction, squashed scoring, sentence mode.

The three-document fixture was worked by hand.  With N = 3 documents and
idf(t) = ln((1 + N) / (1 + df(t))) + 1:

    df(poker) = 2  ->  idf = ln(4/3) + 1 = 1.2876820724517809
    df(bets)  = 1  ->  idf = ln(2)   + 1 = 1.6931471805599454

Each positive-class mean is the margin because no lexicon term appears in
the negative document: poker 1.2876820724517809 (both positive docs),
bets (and casino, fun, night) ln(2 + 2)/... = 1.6931471805599454 / 2 =
0.8465735902799727 (one doc of two).  Rank ties break lexicographically,
so top_n = 2 keeps poker then bets.
"""

import math

import pytest

from guardgate.errors import ValidationError
from guardgate.keywords import (
    CategoryLexicon,
    LexiconDetector,
    build_lexicon,
    classify,
    lexicon_from_yaml,
    load_lexicon,
    raw_score,
    save_lexicon,
    score_sentences,
)
from guardgate.model import Sensitivity, slice_text

CORPUS = [
    ("casino poker bets", True),
    ("poker night fun", True),
    ("weather is sunny", False),
]


def _oracle_weights():
    """Independent recomputation of the expected weights."""
    docs = [set(t.split()) for t, _ in CORPUS]
    n = len(docs)

    def idf(term):
        df = sum(term in d for d in docs)
        return math.log((1 + n) / (1 + df)) + 1.0

    pos = [t.split() for t, lab in CORPUS if lab]
    neg = [t.split() for t, lab in CORPUS if not lab]
    vocab = {w for t, _ in CORPUS for w in t.split()}
    margins = {}
    for term in vocab:
        mp = sum(d.count(term) * idf(term) for d in pos) / len(pos)
        mn = sum(d.count(term) * idf(term) for d in neg) / len(neg)
        if mp - mn > 0:
            margins[term] = mp - mn
    return margins


class TestBuildLexicon:
    def test_toy_corpus_top2(self):
        lex = build_lexicon(CORPUS, "gambling", top_n=2)
        assert list(lex.keywords) == ["poker", "bets"]
        assert lex.keywords["poker"] == pytest.approx(1.2876820724517809, abs=1e-9)
        assert lex.keywords["bets"] == pytest.approx(0.8465735902799727, abs=1e-9)

    def test_matches_independent_oracle(self):
        lex = build_lexicon(CORPUS, "gambling", top_n=10)
        oracle = _oracle_weights()
        assert set(lex.keywords) == set(oracle)
        for term, weight in lex.keywords.items():
            assert weight == pytest.approx(oracle[term], abs=1e-9)

    def test_tie_breaks_lexicographically(self):
        lex = build_lexicon(CORPUS, "gambling", top_n=3)
        # poker first, then the 0.8466 tie resolved alphabetically
        assert list(lex.keywords) == ["poker", "bets", "casino"]

    def test_negative_margin_terms_dropped(self):
        lex = build_lexicon(CORPUS, "gambling", top_n=100)
        for term in ("weather", "is", "sunny"):
            assert term not in lex.keywords

    def test_needs_both_classes(self):
        with pytest.raises(ValidationError) as ei:
            build_lexicon([("a b", True)], "c", top_n=2)
        assert ei.value.code == "DEGENERATE_CORPUS"

    def test_bad_top_n(self):
        with pytest.raises(ValidationError) as ei:
            build_lexicon(CORPUS, "c", top_n=0)
        assert ei.value.code == "BAD_TOP_N"


class TestClassify:
    LEX = CategoryLexicon("toxicity", {"idiot": 1.0, "worthless": 0.8},
                          threshold=0.3)

    def test_closed_form_score(self):
        # s = (1*1.0 + 1*0.8) / 4 tokens = 0.45; score = 0.45/1.45
        f = classify(self.LEX, "you worthless stupid idiot")
        assert f.score == pytest.approx(0.45 / 1.45, abs=1e-9)
        assert f.label == "positive"
        assert f.category == "toxicity"
        assert f.detector_id == "kw.toxicity"

    def test_clean_text_scores_zero(self):
        f = classify(self.LEX, "have a wonderful day")
        assert f.score == 0.0
        assert f.label == "negative"

    def test_score_strictly_below_one(self):
        f = classify(self.LEX, "idiot " * 50)
        assert 0.0 <= f.score < 1.0

    def test_threshold_is_inclusive(self):
        # one keyword in a 2-token text: s = 0.5 -> score = 1/3 > 0.3
        lex = CategoryLexicon("t", {"bad": 1.0}, threshold=1.0 / 3.0)
        assert classify(lex, "bad day").label == "positive"

    def test_match_is_case_insensitive(self):
        f = classify(self.LEX, "IDIOT")
        assert f.label == "positive"

    def test_empty_text(self):
        assert raw_score(self.LEX, "") == 0.0


class TestSentenceMode:
    LEX = CategoryLexicon("toxicity", {"idiot": 1.0}, threshold=0.2)

    def test_per_sentence_scores(self):
        text = "You are an idiot. The weather is nice."
        scores = score_sentences(self.LEX, text)
        assert len(scores) == 2
        # s = 1/4 -> 0.25/1.25 = 0.2, meeting the inclusive threshold
        assert scores[0].score == pytest.approx(0.2, abs=1e-9)
        assert scores[1].score == 0.0
        assert slice_text(text, scores[0].span) == "You are an idiot."

    def test_detector_emits_only_hot_sentences(self):
        det = LexiconDetector(self.LEX, sentence_level=True)
        text = "You are an idiot. The weather is nice."
        findings = det(text)
        assert len(findings) == 1
        f = findings[0]
        assert f.category == "toxicity"
        assert slice_text(text, f.span) == "You are an idiot."
        assert f.label == "positive"

    def test_whole_text_detector_silent_when_negative(self):
        det = LexiconDetector(self.LEX)
        assert det("all is calm here today") == []

    def test_whole_text_detector_positive(self):
        det = LexiconDetector(self.LEX)
        findings = det("idiot idiot idiot")
        assert len(findings) == 1
        assert findings[0].span is None  # whole-text verdicts carry no span


class TestLexiconFiles:
    def test_round_trip(self, tmp_path):
        lex = build_lexicon(CORPUS, "gambling", top_n=2, threshold=0.25)
        path = tmp_path / "gambling.yaml"
        save_lexicon(lex, path)
        back = load_lexicon(path)
        assert back.category == lex.category
        assert back.threshold == lex.threshold
        assert back.keywords == pytest.approx(lex.keywords)

    def test_malformed_yaml_rejected(self):
        with pytest.raises(ValidationError) as ei:
            lexicon_from_yaml("just a string")
        assert ei.value.code == "MALFORMED_LEXICON"

    def test_missing_keywords_rejected(self):
        with pytest.raises(ValidationError):
            lexicon_from_yaml("category: x\nthreshold: 0.5\n")
