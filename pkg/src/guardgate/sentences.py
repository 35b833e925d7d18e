"""Rule-based sentence splitting with offset-preserving spans.

The splitter never copies or rewrites text: it returns spans into the
original string.  Spans cover everything except inter-sentence whitespace,
so concatenating the slices and the skipped whitespace reproduces the input
exactly.
"""

from __future__ import annotations

import re
from importlib import resources

from .model import Span

# A boundary candidate is a run of terminal punctuation followed by
# whitespace or end of text.
_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s|$)")

# Token immediately before a candidate period, possibly dotted ("e.g").
_TAIL_WORD_RE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


def _load_abbreviations() -> frozenset[str]:
    data = resources.files("guardgate").joinpath("data/abbreviations.txt")
    out = set()
    for line in data.read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            out.add(line.rstrip("."))
    return frozenset(out)


DEFAULT_ABBREVIATIONS = _load_abbreviations()


def _is_abbreviation(text: str, dot_pos: int, guard: frozenset[str]) -> bool:
    """True when the period at ``dot_pos`` ends a guarded abbreviation or a
    single-letter initial, so it must not split."""
    m = _TAIL_WORD_RE.search(text, 0, dot_pos)
    if not m:
        return False
    token = m.group(1)
    if len(token) == 1 and token.isupper():
        return True
    return token.lower().rstrip(".") in guard


def sentence_spans(text: str,
                   abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS) -> list[Span]:
    """Split ``text`` into sentence spans.

    Boundaries are ``.``, ``!`` or ``?`` followed by whitespace or end of
    text; a lone period after a guarded abbreviation or single-letter
    initial does not split.  Returned spans are non-overlapping, in order,
    never empty, and separated only by whitespace.
    """
    spans: list[Span] = []
    cursor = 0
    n = len(text)

    def emit(end: int) -> None:
        nonlocal cursor
        start = cursor
        while start < end and text[start].isspace():
            start += 1
        stop = end
        while stop > start and text[stop - 1].isspace():
            stop -= 1
        if stop > start:
            spans.append(Span(start, stop))
        cursor = end

    for m in _BOUNDARY_RE.finditer(text):
        run = m.group()
        if run == "." and _is_abbreviation(text, m.start(), abbreviations):
            continue
        # A lowercase continuation means mid-sentence punctuation
        # ("wait... maybe"), not a boundary.
        j = m.end()
        while j < n and text[j].isspace():
            j += 1
        if j < n and text[j].islower():
            continue
        emit(m.end())
    if cursor < n:
        emit(n)
    return spans
