"""Word tokenization with code-point offsets, shared by all detectors."""

from __future__ import annotations

import re

from .model import Span

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def word_spans(text: str) -> list[Span]:
    """Spans of all word tokens (``\\w+`` runs), left to right."""
    return [Span(m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def normalized_words(text: str) -> list[str]:
    """Lowercased word tokens; punctuation and whitespace fall away."""
    return [w.lower() for w in _WORD_RE.findall(text)]


def normalized_word_spans(text: str) -> tuple[list[str], list[Span]]:
    """Lowercased tokens together with their original spans."""
    tokens: list[str] = []
    spans: list[Span] = []
    for m in _WORD_RE.finditer(text):
        tokens.append(m.group().lower())
        spans.append(Span(m.start(), m.end()))
    return tokens, spans
