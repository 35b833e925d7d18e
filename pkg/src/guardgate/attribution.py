"""Attribution: detect verbatim or near-verbatim reuse of indexed sources.

Indexing hashes every k-word shingle of the normalized corpus into an
inverted index of (doc_id, word offset) postings.  Querying slides
overlapping chunk windows over the query, narrows candidates by shingle-hit
count (stage 1), then runs token-level local alignment against the candidate
region (stage 2).  Similarity is matched tokens over aligned query tokens;
1.0 means verbatim.

Normalization is lowercasing plus punctuation/whitespace collapse via word
tokenization, so formatting differences never defeat a match.  Reported
spans always index the original, un-normalized texts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .detectors import DetectorDescriptor, DetectorKind, FailMode
from .errors import ValidationError
from .model import Finding, Span
from .tokenization import normalized_word_spans

DEFAULT_K = 5
DEFAULT_CHUNK_LEN = 12
DEFAULT_OVERLAP = 6
DEFAULT_MAX_CANDIDATES = 20
DEFAULT_MIN_SIMILARITY = 0.8

# Merge chunk hits whose query token ranges are within this many tokens of
# each other; a trimmed mismatch at a chunk seam must not split one match
# into two.
_MERGE_GAP = 2
_REGION_MARGIN = 2


class MatchKind(str, Enum):
    VERBATIM = "verbatim"
    SEMI_VERBATIM = "semi_verbatim"


@dataclass(frozen=True)
class AttributionMatch:
    query_span: Span
    doc_id: str
    doc_span: Span
    similarity: float
    kind: MatchKind


@dataclass
class AttributionTrace:
    """Instrumentation hook: stage-1 candidates per chunk."""

    chunks: list[tuple[Span, list[str]]] = field(default_factory=list)

    def candidate_docs(self) -> set[str]:
        return {doc for _, docs in self.chunks for doc in docs}


def _shingle_hash(tokens: list[str]) -> int:
    joined = " ".join(tokens).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(joined, digest_size=8).digest(), "big")


class CorpusIndex:
    """Inverted shingle index over a document corpus."""

    def __init__(self, k: int, docs: dict[str, str],
                 postings: dict[int, list[tuple[str, int]]]):
        self.k = k
        self.docs = docs
        self.postings = postings
        self._tokens: dict[str, list[str]] = {}
        self._spans: dict[str, list[Span]] = {}

    def doc_tokens(self, doc_id: str) -> tuple[list[str], list[Span]]:
        if doc_id not in self._tokens:
            tokens, spans = normalized_word_spans(self.docs[doc_id])
            self._tokens[doc_id] = tokens
            self._spans[doc_id] = spans
        return self._tokens[doc_id], self._spans[doc_id]

    @property
    def n_shingles(self) -> int:
        return len(self.postings)

    def to_bytes(self) -> bytes:
        payload = {
            "format": 1,
            "k": self.k,
            "docs": self.docs,
            "postings": {str(h): [[d, o] for d, o in posts]
                         for h, posts in self.postings.items()},
        }
        return json.dumps(payload, sort_keys=True).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "CorpusIndex":
        payload = json.loads(data.decode("utf-8"))
        if payload.get("format") != 1:
            raise ValidationError(
                "VERSION_MISMATCH", f"unsupported index format {payload.get('format')}")
        postings = {int(h): [(d, int(o)) for d, o in posts]
                    for h, posts in payload["postings"].items()}
        return cls(int(payload["k"]), dict(payload["docs"]), postings)


def index_corpus(docs: Iterable[tuple[str, str]], k: int = DEFAULT_K) -> CorpusIndex:
    """Build an index from (doc_id, text) pairs.

    Duplicate ids raise DUPLICATE_DOC_ID; an empty corpus or empty document
    raises EMPTY_CORPUS.  Documents shorter than k words are retained but
    contribute no shingles.
    """
    if k < 2:
        raise ValidationError("BAD_SHINGLE_K", f"k must be >= 2, got {k}")
    texts: dict[str, str] = {}
    postings: dict[int, list[tuple[str, int]]] = {}
    for doc_id, text in docs:
        if doc_id in texts:
            raise ValidationError("DUPLICATE_DOC_ID", f"duplicate doc id {doc_id!r}")
        if not text.strip():
            raise ValidationError("EMPTY_CORPUS", f"document {doc_id!r} is empty")
        texts[doc_id] = text
        tokens, _ = normalized_word_spans(text)
        for i in range(len(tokens) - k + 1):
            postings.setdefault(_shingle_hash(tokens[i:i + k]), []).append((doc_id, i))
    if not texts:
        raise ValidationError("EMPTY_CORPUS", "no documents to index")
    return CorpusIndex(k, texts, postings)


# ---------------------------------------------------------------------------
# stage 2: token-level local alignment

def _local_align(q: list[str], d: list[str]) -> tuple[int, int, int, int, int]:
    """Smith-Waterman over token sequences (match +1, mismatch/gap -1).

    Returns (matched, q_start, q_end, d_start, d_end) for the best local
    alignment; all-zero when nothing aligns.  Ties resolve to the earliest
    cell and a diagonal-first traceback, so results are deterministic.
    """
    n, m = len(q), len(d)
    if n == 0 or m == 0:
        return 0, 0, 0, 0, 0
    h = [[0] * (m + 1) for _ in range(n + 1)]
    best, bi, bj = 0, 0, 0
    for i in range(1, n + 1):
        row = h[i]
        above = h[i - 1]
        qi = q[i - 1]
        for j in range(1, m + 1):
            diag = above[j - 1] + (1 if qi == d[j - 1] else -1)
            up = above[j] - 1
            left = row[j - 1] - 1
            v = diag if diag >= up else up
            if left > v:
                v = left
            if v < 0:
                v = 0
            row[j] = v
            if v > best:
                best, bi, bj = v, i, j
    if best == 0:
        return 0, 0, 0, 0, 0
    matched = 0
    i, j = bi, bj
    while i > 0 and j > 0 and h[i][j] > 0:
        eq = q[i - 1] == d[j - 1]
        step = h[i - 1][j - 1] + (1 if eq else -1)
        if h[i][j] == step:
            if eq:
                matched += 1
            i -= 1
            j -= 1
        elif h[i][j] == h[i - 1][j] - 1:
            i -= 1
        else:
            j -= 1
    return matched, i, bi, j, bj


# ---------------------------------------------------------------------------
# attribution query

@dataclass
class _ChunkHit:
    doc_id: str
    q_start: int
    q_end: int
    d_start: int
    d_end: int


def _chunk_starts(n_tokens: int, chunk_len: int, step: int) -> list[int]:
    if n_tokens <= chunk_len:
        return [0]
    starts = list(range(0, n_tokens - chunk_len + 1, step))
    if starts[-1] != n_tokens - chunk_len:
        starts.append(n_tokens - chunk_len)
    return starts


def attribute(index: CorpusIndex, query_text: str, *,
              chunk_len: int = DEFAULT_CHUNK_LEN,
              overlap: int = DEFAULT_OVERLAP,
              max_candidates: int = DEFAULT_MAX_CANDIDATES,
              min_similarity: float = DEFAULT_MIN_SIMILARITY,
              trace: AttributionTrace | None = None) -> list[AttributionMatch]:
    """Find reused passages of indexed documents inside ``query_text``.

    Adjacent hits against the same document merge into one match whose
    similarity is recomputed over the merged region, so a long reused
    passage reports once.  Output is sorted by query span, then doc id.
    """
    if overlap < 0 or overlap >= chunk_len:
        raise ValidationError(
            "BAD_CHUNKING", f"need 0 <= overlap < chunk_len, got {overlap}/{chunk_len}")
    q_tokens, q_spans = normalized_word_spans(query_text)
    k = index.k
    if len(q_tokens) < k:
        return []

    step = chunk_len - overlap
    hits: dict[str, list[_ChunkHit]] = {}
    for start in _chunk_starts(len(q_tokens), chunk_len, step):
        end = min(start + chunk_len, len(q_tokens))
        chunk = q_tokens[start:end]
        doc_hits: dict[str, list[int]] = {}
        for i in range(len(chunk) - k + 1):
            for doc_id, offset in index.postings.get(_shingle_hash(chunk[i:i + k]), ()):
                doc_hits.setdefault(doc_id, []).append(offset)
        ranked = sorted(doc_hits, key=lambda d: (-len(doc_hits[d]), d))[:max_candidates]
        if trace is not None:
            trace.chunks.append(
                (Span(q_spans[start].start, q_spans[end - 1].end), list(ranked)))
        for doc_id in ranked:
            d_tokens, _ = index.doc_tokens(doc_id)
            offsets = doc_hits[doc_id]
            d_lo = max(0, min(offsets) - chunk_len)
            d_hi = min(len(d_tokens), max(offsets) + k + chunk_len)
            # widen the query side so a reused run straddling this chunk's
            # boundary can still align in full
            q_lo = max(0, start - chunk_len)
            q_hi = min(len(q_tokens), end + chunk_len)
            matched, qs, qe, ds, de = _local_align(
                q_tokens[q_lo:q_hi], d_tokens[d_lo:d_hi])
            if matched == 0:
                continue
            if matched / (qe - qs) >= min_similarity:
                hits.setdefault(doc_id, []).append(_ChunkHit(
                    doc_id, q_lo + qs, q_lo + qe, d_lo + ds, d_lo + de))

    matches: list[AttributionMatch] = []
    for doc_id, chunk_hits in hits.items():
        d_tokens, d_spans = index.doc_tokens(doc_id)
        chunk_hits.sort(key=lambda ch: (ch.q_start, ch.q_end))
        merged: list[_ChunkHit] = []
        for ch in chunk_hits:
            if merged and ch.q_start <= merged[-1].q_end + _MERGE_GAP:
                last = merged[-1]
                last.q_end = max(last.q_end, ch.q_end)
                last.d_start = min(last.d_start, ch.d_start)
                last.d_end = max(last.d_end, ch.d_end)
            else:
                merged.append(ch)
        for region in merged:
            q_lo = max(0, region.q_start - _REGION_MARGIN)
            q_hi = min(len(q_tokens), region.q_end + _REGION_MARGIN)
            d_lo = max(0, region.d_start - _REGION_MARGIN)
            d_hi = min(len(d_tokens), region.d_end + _REGION_MARGIN)
            matched, qs, qe, ds, de = _local_align(
                q_tokens[q_lo:q_hi], d_tokens[d_lo:d_hi])
            if matched == 0:
                continue
            similarity = matched / (qe - qs)
            if similarity < min_similarity:
                continue
            query_span = Span(q_spans[q_lo + qs].start, q_spans[q_lo + qe - 1].end)
            doc_span = Span(d_spans[d_lo + ds].start, d_spans[d_lo + de - 1].end)
            kind = MatchKind.VERBATIM if similarity == 1.0 else MatchKind.SEMI_VERBATIM
            matches.append(AttributionMatch(query_span, doc_id, doc_span,
                                            similarity, kind))

    matches.sort(key=lambda m: (m.query_span.start, m.query_span.end, m.doc_id))
    return matches


# ---------------------------------------------------------------------------
# detector wrapper

class AttributionDetector:
    """Comparison detector over a corpus index."""

    def __init__(self, index: CorpusIndex, detector_id: str = "attribution", *,
                 chunk_len: int = DEFAULT_CHUNK_LEN, overlap: int = DEFAULT_OVERLAP,
                 max_candidates: int = DEFAULT_MAX_CANDIDATES,
                 min_similarity: float = DEFAULT_MIN_SIMILARITY):
        self.index = index
        self.detector_id = detector_id
        self.chunk_len = chunk_len
        self.overlap = overlap
        self.max_candidates = max_candidates
        self.min_similarity = min_similarity

    def descriptor(self, timeout_ms: float = 2000.0,
                   fail_mode: FailMode = FailMode.FAIL_OPEN) -> DetectorDescriptor:
        return DetectorDescriptor(
            self.detector_id, DetectorKind.COMPARISON,
            frozenset({"attribution"}), timeout_ms, fail_mode)

    def __call__(self, text: str) -> list[Finding]:
        out = []
        for match in attribute(
                self.index, text, chunk_len=self.chunk_len, overlap=self.overlap,
                max_candidates=self.max_candidates,
                min_similarity=self.min_similarity):
            out.append(Finding(
                detector_id=self.detector_id,
                category="attribution",
                score=match.similarity,
                label=match.kind.value,
                span=match.query_span,
                evidence=match.doc_id,
            ))
        return out
