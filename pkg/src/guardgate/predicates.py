"""Predicate expressions for policy rules.

Grammar (keywords case-sensitive, strings double-quoted, ``*`` globs in
category patterns):

    expr        := term ("or" term)*
    term        := factor ("and" factor)*
    factor      := "(" expr ")" | atom
    atom        := finding | same_sentence | direction
    finding     := "finding" "(" constraint ("," constraint)* ")"
    constraint  := "category" "=" PATTERN
                 | ["not"] "score" CMP NUMBER
                 | ["not"] "sensitivity" CMP LEVEL
    same_sentence := "same_sentence" "(" PATTERN "," PATTERN ")"
    direction   := "direction" "==" ("prompt" | "response")
    CMP         := ">=" | "<=" | ">" | "<" | "=="
    LEVEL       := "low" | "moderate" | "high"

Negation exists only inside ``finding(...)`` on score/sensitivity
comparisons.  There is deliberately no way to assert the *absence* of a
category, which keeps every expression monotone: adding findings can only
turn atoms true, never false, so extra evidence can never lower a decision.

Evaluation returns both the boolean outcome and the set of finding indices
that satisfied the satisfied atoms, for audit records and masking.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fnmatch import fnmatchcase
from typing import Sequence

from .model import Direction, Finding, Sensitivity, Span


class PredicateSyntaxError(ValueError):
    """Parse failure; ``column`` is a 1-based offset into the source."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Comparison:
    field: str            # "score" | "sensitivity"
    op: str
    value: float | Sensitivity
    negated: bool = False

    def test(self, actual) -> bool:
        if actual is None:
            return False
        left = actual.rank if isinstance(actual, Sensitivity) else actual
        right = self.value.rank if isinstance(self.value, Sensitivity) else self.value
        outcome = _OPS[self.op](left, right)
        return not outcome if self.negated else outcome


_OPS = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


@dataclass(frozen=True)
class FindingAtom:
    category: str | None
    tests: tuple[Comparison, ...]


@dataclass(frozen=True)
class SameSentence:
    category_a: str
    category_b: str


@dataclass(frozen=True)
class DirectionIs:
    direction: Direction


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<string>"[^"]*")
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<op>>=|<=|==|[><=(),])
  | (?P<word>[A-Za-z_][A-Za-z0-9_.*-]*|\*)
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    column: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise PredicateSyntaxError(f"unexpected character {src[pos]!r}", pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", len(src) + 1))
    return tokens


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> _Token:
        if self.cur.value != value:
            raise PredicateSyntaxError(
                f"expected {value!r}, found {self.cur.value or 'end of input'!r}",
                self.cur.column)
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.cur.kind != "eof":
            raise PredicateSyntaxError(
                f"unexpected trailing input {self.cur.value!r}", self.cur.column)
        return node

    def expr(self):
        children = [self.term()]
        while self.cur.value == "or":
            self.advance()
            children.append(self.term())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def term(self):
        children = [self.factor()]
        while self.cur.value == "and":
            self.advance()
            children.append(self.factor())
        return children[0] if len(children) == 1 else And(tuple(children))

    def factor(self):
        if self.cur.value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if self.cur.value == "not":
            raise PredicateSyntaxError(
                "negation is only allowed inside finding() on score/sensitivity "
                "comparisons", self.cur.column)
        if self.cur.value == "finding":
            return self.finding_atom()
        if self.cur.value == "same_sentence":
            return self.same_sentence()
        if self.cur.value == "direction":
            return self.direction_atom()
        raise PredicateSyntaxError(
            f"expected an atom, found {self.cur.value or 'end of input'!r}",
            self.cur.column)

    def pattern(self) -> str:
        tok = self.cur
        if tok.kind == "string":
            self.advance()
            return tok.value[1:-1]
        if tok.kind == "word":
            self.advance()
            return tok.value
        raise PredicateSyntaxError(
            f"expected a category pattern, found {tok.value!r}", tok.column)

    def finding_atom(self):
        self.advance()
        self.expect("(")
        category = None
        tests = []
        while True:
            tok = self.cur
            negated = False
            if tok.value == "not":
                self.advance()
                tok = self.cur
                negated = True
            if tok.value == "category":
                if negated:
                    raise PredicateSyntaxError(
                        "category constraints cannot be negated", tok.column)
                if category is not None:
                    raise PredicateSyntaxError(
                        "duplicate category constraint", tok.column)
                self.advance()
                self.expect("=")
                category = self.pattern()
            elif tok.value in ("score", "sensitivity"):
                field = tok.value
                self.advance()
                op = self.cur
                if op.value not in _OPS:
                    raise PredicateSyntaxError(
                        f"expected a comparison operator, found {op.value!r}",
                        op.column)
                self.advance()
                val = self.cur
                if field == "score":
                    if val.kind != "number":
                        raise PredicateSyntaxError(
                            f"expected a number, found {val.value!r}", val.column)
                    value = float(val.value)
                else:
                    try:
                        value = Sensitivity(val.value)
                    except ValueError:
                        raise PredicateSyntaxError(
                            f"expected low/moderate/high, found {val.value!r}",
                            val.column) from None
                self.advance()
                tests.append(Comparison(field, op.value, value, negated))
            else:
                raise PredicateSyntaxError(
                    f"expected a finding constraint, found {tok.value!r}", tok.column)
            if self.cur.value == ",":
                self.advance()
                continue
            break
        self.expect(")")
        return FindingAtom(category, tuple(tests))

    def same_sentence(self):
        self.advance()
        self.expect("(")
        a = self.pattern()
        self.expect(",")
        b = self.pattern()
        self.expect(")")
        return SameSentence(a, b)

    def direction_atom(self):
        self.advance()
        self.expect("==")
        tok = self.cur
        try:
            direction = Direction(tok.value.strip('"'))
        except ValueError:
            raise PredicateSyntaxError(
                f"expected prompt or response, found {tok.value!r}",
                tok.column) from None
        self.advance()
        return DirectionIs(direction)


def parse(src: str):
    """Parse a predicate expression; raises PredicateSyntaxError."""
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalContext:
    """Findings plus the request facts predicates may reference.

    ``levels[i]`` is the assessed sensitivity for findings[i] (policy
    inference may raise it above what the detector reported).
    ``sentences`` is the shared sentence partition of the request text.
    """

    findings: Sequence[Finding]
    levels: Sequence[Sensitivity | None]
    direction: Direction
    sentences: Sequence[Span] = ()

    def sentence_ids(self, span: Span) -> frozenset[int]:
        return frozenset(
            i for i, s in enumerate(self.sentences) if s.overlaps(span))


def evaluate(node, ctx: EvalContext) -> tuple[bool, frozenset[int]]:
    """Evaluate to (outcome, indices of findings behind that outcome)."""
    if isinstance(node, FindingAtom):
        matched = frozenset(
            i for i, f in enumerate(ctx.findings)
            if (node.category is None or fnmatchcase(f.category, node.category))
            and all(t.test(ctx.levels[i] if t.field == "sensitivity" else f.score)
                    for t in node.tests))
        return bool(matched), matched
    if isinstance(node, SameSentence):
        matched = set()
        located = [(i, ctx.sentence_ids(f.span))
                   for i, f in enumerate(ctx.findings) if f.span is not None]
        for i, sent_i in located:
            if not fnmatchcase(ctx.findings[i].category, node.category_a):
                continue
            for j, sent_j in located:
                if i == j or not fnmatchcase(ctx.findings[j].category, node.category_b):
                    continue
                if sent_i & sent_j:
                    matched.add(i)
                    matched.add(j)
        return bool(matched), frozenset(matched)
    if isinstance(node, DirectionIs):
        return ctx.direction is node.direction, frozenset()
    if isinstance(node, And):
        acc: frozenset[int] = frozenset()
        for child in node.children:
            ok, matched = evaluate(child, ctx)
            if not ok:
                return False, frozenset()
            acc |= matched
        return True, acc
    if isinstance(node, Or):
        acc = frozenset()
        any_ok = False
        for child in node.children:
            ok, matched = evaluate(child, ctx)
            if ok:
                any_ok = True
                acc |= matched
        return any_ok, acc
    raise TypeError(f"not a predicate node: {node!r}")


def category_patterns(node) -> frozenset[str]:
    """Every category pattern the expression can match against."""
    if isinstance(node, FindingAtom):
        return frozenset() if node.category is None else frozenset({node.category})
    if isinstance(node, SameSentence):
        return frozenset({node.category_a, node.category_b})
    if isinstance(node, (And, Or)):
        out: frozenset[str] = frozenset()
        for child in node.children:
            out |= category_patterns(child)
        return out
    return frozenset()
