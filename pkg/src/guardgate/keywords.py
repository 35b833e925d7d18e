"""Lightweight keyword classification: TF-IDF salience lexicons, a squashed
frequency score, and per-sentence scoring for abuse-style categories.

A lexicon maps terms to salience weights learned from a labeled corpus:
weight(t) = mean TF-IDF of t over positive docs minus its mean over negative
docs, with tf as the raw in-document count and
idf(t) = ln((1 + N) / (1 + df(t))) + 1.  Only positive-margin terms are
kept, ranked by weight and then lexicographically.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import yaml

from .detectors import DetectorDescriptor, DetectorKind, FailMode
from .errors import ValidationError
from .model import Finding, Span, slice_text
from .sentences import sentence_spans
from .tokenization import normalized_words

DEFAULT_THRESHOLD = 0.3


@dataclass(frozen=True)
class CategoryLexicon:
    """Weighted keyword list for one category, with decision threshold."""

    category: str
    keywords: Mapping[str, float]
    threshold: float = DEFAULT_THRESHOLD


@dataclass(frozen=True)
class SentenceScore:
    span: Span
    score: float


def build_lexicon(labeled_docs: Iterable[tuple[str, bool]], category: str,
                  top_n: int, threshold: float = DEFAULT_THRESHOLD) -> CategoryLexicon:
    """Learn a lexicon from (text, is_positive) pairs.

    Raises DEGENERATE_CORPUS unless both classes are present.  Ties in
    salience rank break lexicographically, so the result is deterministic
    for a given corpus.
    """
    if top_n < 1:
        raise ValidationError("BAD_TOP_N", f"top_n must be >= 1, got {top_n}")
    pos_counts: list[Counter] = []
    neg_counts: list[Counter] = []
    for text, is_positive in labeled_docs:
        counts = Counter(normalized_words(text))
        (pos_counts if is_positive else neg_counts).append(counts)
    if not pos_counts or not neg_counts:
        raise ValidationError(
            "DEGENERATE_CORPUS",
            "labeled corpus must contain both positive and negative documents")

    all_docs = pos_counts + neg_counts
    n_docs = len(all_docs)
    df = Counter()
    for counts in all_docs:
        df.update(counts.keys())

    def mean_tfidf(term: str, docs: list[Counter]) -> float:
        idf = math.log((1 + n_docs) / (1 + df[term])) + 1.0
        return sum(c[term] * idf for c in docs) / len(docs)

    vocabulary = sorted(df)
    margins = []
    for term in vocabulary:
        margin = mean_tfidf(term, pos_counts) - mean_tfidf(term, neg_counts)
        if margin > 0:
            margins.append((term, margin))
    margins.sort(key=lambda item: (-item[1], item[0]))
    keywords = {term: weight for term, weight in margins[:top_n]}
    return CategoryLexicon(category, keywords, threshold)


def raw_score(lexicon: CategoryLexicon, text: str) -> float:
    """Length-normalized weighted keyword frequency, before squashing."""
    tokens = normalized_words(text)
    if not tokens:
        return 0.0
    counts = Counter(tokens)
    s = sum(counts[t] * w for t, w in lexicon.keywords.items())
    return s / len(tokens)


def classify(lexicon: CategoryLexicon, text: str,
             detector_id: str | None = None) -> Finding:
    """Whole-text classification: score = s / (s + 1) for the normalized
    keyword mass s, label positive iff score >= threshold."""
    s = raw_score(lexicon, text)
    score = s / (s + 1.0)
    label = "positive" if score >= lexicon.threshold else "negative"
    return Finding(
        detector_id=detector_id or f"kw.{lexicon.category}",
        category=lexicon.category,
        score=score,
        label=label,
    )


def score_sentences(lexicon: CategoryLexicon, text: str) -> list[SentenceScore]:
    """Score every sentence independently.  Sentence spans partition the
    text apart from inter-sentence whitespace."""
    out = []
    for span in sentence_spans(text):
        s = raw_score(lexicon, slice_text(text, span))
        out.append(SentenceScore(span, s / (s + 1.0)))
    return out


# ---------------------------------------------------------------------------
# lexicon files

def lexicon_from_yaml(text: str, source: str = "<lexicon>") -> CategoryLexicon:
    """Parse lexicon YAML ({category, threshold, keywords})."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "category" not in doc or "keywords" not in doc:
        raise ValidationError(
            "MALFORMED_LEXICON", f"lexicon {source}: need category and keywords")
    return CategoryLexicon(
        category=str(doc["category"]),
        keywords={str(k): float(v) for k, v in doc["keywords"].items()},
        threshold=float(doc.get("threshold", DEFAULT_THRESHOLD)),
    )


def load_lexicon(source: str | Path) -> CategoryLexicon:
    """Read a lexicon YAML file."""
    p = Path(source)
    return lexicon_from_yaml(p.read_text(encoding="utf-8"), source=p.name)


def save_lexicon(lexicon: CategoryLexicon, path: str | Path) -> None:
    doc = {
        "category": lexicon.category,
        "threshold": lexicon.threshold,
        # keyword order is the salience ranking; keep it
        "keywords": {k: float(v) for k, v in lexicon.keywords.items()},
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")


# ---------------------------------------------------------------------------
# detector wrapper

class LexiconDetector:
    """Classification detector over one lexicon.

    Whole-text mode emits a finding only for a positive label; sentence mode
    emits one finding per sentence whose score clears the threshold, with
    the sentence's span.
    """

    def __init__(self, lexicon: CategoryLexicon, detector_id: str | None = None,
                 sentence_level: bool = False):
        self.lexicon = lexicon
        self.detector_id = detector_id or f"kw.{lexicon.category}"
        self.sentence_level = sentence_level

    def descriptor(self, timeout_ms: float = 2000.0,
                   fail_mode: FailMode = FailMode.FAIL_OPEN) -> DetectorDescriptor:
        return DetectorDescriptor(
            self.detector_id, DetectorKind.CLASSIFICATION,
            frozenset({self.lexicon.category}), timeout_ms, fail_mode)

    def __call__(self, text: str) -> list[Finding]:
        if not self.sentence_level:
            finding = classify(self.lexicon, text, self.detector_id)
            return [finding] if finding.label == "positive" else []
        out = []
        for scored in score_sentences(self.lexicon, text):
            if scored.score >= self.lexicon.threshold:
                out.append(Finding(
                    detector_id=self.detector_id,
                    category=self.lexicon.category,
                    score=scored.score,
                    label="positive",
                    span=scored.span,
                ))
        return out
