"""Tokenizer and error-recovering parser for generated ``Triple(...)`` lists.

The parser understands only the small code subset the prompts use::

    triples := Triple ( ctor , ctor , ctor ) ( [,\\n] Triple ( ... ) )*
    ctor    := IDENT ( STRING )

Everything before the first ``Triple`` identifier is skipped. Parsing stops at
the ``]`` closing the list, at EOF, or at ``class`` at the start of a line.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable

from .core import UNKNOWN, EntityMention, RelationTriple, Schema, normalize_surface


class TokenKind(str, enum.Enum):
    IDENT = "IDENT"
    STRING = "STRING"
    LPAREN = "LPAREN"
    RPAREN = "RPAREN"
    LBRACKET = "LBRACKET"
    RBRACKET = "RBRACKET"
    COMMA = "COMMA"
    EQUALS = "EQUALS"
    COMMENT = "COMMENT"
    NEWLINE = "NEWLINE"
    WHITESPACE = "WHITESPACE"
    UNKNOWN = "UNKNOWN"
    EOF = "EOF"


_PUNCT = {
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    "[": TokenKind.LBRACKET,
    "]": TokenKind.RBRACKET,
    ",": TokenKind.COMMA,
    "=": TokenKind.EQUALS,
}

_TRIVIA = (TokenKind.WHITESPACE, TokenKind.NEWLINE, TokenKind.COMMENT)


@dataclass(frozen=True)
class Token:
    """One lexical unit.

    ``text`` holds the unescaped value for STRING tokens and the raw source
    otherwise; ``raw`` is always the exact source slice. ``offset`` is a byte
    offset into the UTF-8 encoding of the input. ``error`` marks tokens the
    lexer could not close (unterminated strings) or decode.
    """

    kind: TokenKind
    text: str
    offset: int
    raw: str = ""
    error: str | None = None


@dataclass(frozen=True)
class Diagnostic:
    offset: int
    message: str
    severity: str = "error"

    def to_dict(self) -> dict[str, Any]:
        return {"offset": self.offset, "message": self.message, "severity": self.severity}


@dataclass(frozen=True)
class ParseResult:
    triples: tuple[RelationTriple, ...] = ()
    diagnostics: tuple[Diagnostic, ...] = ()
    consumed_bytes: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "triples": [t.to_dict() for t in self.triples],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "consumed_bytes": self.consumed_bytes,
        }


def _byte_len(s: str) -> int:
    try:
        return len(s.encode("utf-8", "surrogateescape"))
    except UnicodeEncodeError:
        return len(s.encode("utf-8", "surrogatepass"))


def _is_ident_start(c: str) -> bool:
    return c == "_" or ("a" <= c <= "z") or ("A" <= c <= "Z")


def _is_ident_char(c: str) -> bool:
    return _is_ident_start(c) or ("0" <= c <= "9")


def _scan_string(src: str, i: int) -> tuple[int, str, str | None]:
    """Scan a quoted string starting at ``src[i]``; return (end, value, error)."""
    n = len(src)
    q = src[i]
    triple_q = src.startswith(q * 3, i)
    delim = q * 3 if triple_q else q
    j = i + len(delim)
    buf: list[str] = []
    while j < n:
        c = src[j]
        if c == "\\" and j + 1 < n and src[j + 1] not in "\r\n":
            nxt = src[j + 1]
            if nxt in "\\\"'":
                buf.append(nxt)
            else:
                buf.append(c)
                buf.append(nxt)
            j += 2
            continue
        if src.startswith(delim, j):
            return j + len(delim), "".join(buf), None
        if c in "\r\n":
            # single-line rule for every delimiter: an unclosed string stops at end of line
            if not triple_q:
                return j, "".join(buf), "unterminated string"
        buf.append(c)
        j += 1
    return n, "".join(buf), "unterminated string"


def tokenize(source: str | bytes) -> list[Token]:
    """Split ``source`` into tokens covering every input character exactly once.

    Bytes are decoded as UTF-8 with ``surrogateescape`` so invalid sequences
    survive as UNKNOWN tokens. The stream always ends with an EOF token.
    """
    if isinstance(source, (bytes, bytearray)):
        src = bytes(source).decode("utf-8", "surrogateescape")
    else:
        src = source
    tokens: list[Token] = []
    n = len(src)
    i = 0
    offset = 0

    def emit(kind: TokenKind, start: int, end: int, text: str | None = None, error: str | None = None) -> None:
        nonlocal offset
        raw = src[start:end]
        tokens.append(Token(kind, raw if text is None else text, offset, raw, error))
        offset += _byte_len(raw)

    while i < n:
        c = src[i]
        if c == "\n":
            emit(TokenKind.NEWLINE, i, i + 1)
            i += 1
        elif c == "\r":
            end = i + 2 if src.startswith("\r\n", i) else i + 1
            emit(TokenKind.NEWLINE, i, end)
            i = end
        elif c in " \t\f\v":
            j = i + 1
            while j < n and src[j] in " \t\f\v":
                j += 1
            emit(TokenKind.WHITESPACE, i, j)
            i = j
        elif c == "#":
            j = i
            while j < n and src[j] not in "\r\n":
                j += 1
            emit(TokenKind.COMMENT, i, j)
            i = j
        elif _is_ident_start(c):
            j = i + 1
            while j < n and _is_ident_char(src[j]):
                j += 1
            emit(TokenKind.IDENT, i, j)
            i = j
        elif c in "\"'":
            end, value, err = _scan_string(src, i)
            emit(TokenKind.STRING, i, end, value, err)
            i = end
        elif c in _PUNCT:
            emit(_PUNCT[c], i, i + 1)
            i += 1
        else:
            err = "undecodable byte" if "\udc80" <= c <= "\udcff" else None
            emit(TokenKind.UNKNOWN, i, i + 1, error=err)
            i += 1
    tokens.append(Token(TokenKind.EOF, "", offset, ""))
    return tokens


class _SyntaxError(Exception):
    def __init__(self, tok: Token, message: str):
        super().__init__(message)
        self.tok = tok
        self.message = message


@dataclass
class _Sig:
    tok: Token
    line_start: bool


@dataclass
class _Parser:
    toks: list[_Sig]
    schema: Schema | None
    pos: int = 0
    depth: int = 0
    triples: list[RelationTriple] = field(default_factory=list)
    diags: list[Diagnostic] = field(default_factory=list)
    consumed: int = 0

    def peek(self) -> _Sig:
        return self.toks[self.pos]

    def advance(self) -> Token:
        sig = self.toks[self.pos]
        if sig.tok.kind is not TokenKind.EOF:
            self.pos += 1
        self.consumed = sig.tok.offset + _byte_len(sig.tok.raw)
        return sig.tok

    def expect(self, kind: TokenKind, what: str) -> Token:
        tok = self.peek().tok
        if tok.kind is not kind:
            shown = tok.raw if tok.kind is not TokenKind.EOF else "end of input"
            raise _SyntaxError(tok, f"expected {what}, found {shown!r}")
        self.advance()
        if kind in (TokenKind.LPAREN, TokenKind.LBRACKET):
            self.depth += 1
        elif kind in (TokenKind.RPAREN, TokenKind.RBRACKET):
            self.depth -= 1
        return tok

    def _is_stop(self, sig: _Sig) -> bool:
        tok = sig.tok
        return tok.kind is TokenKind.EOF or (
            tok.kind is TokenKind.IDENT and tok.text == "class" and sig.line_start
        )

    def run(self) -> None:
        start = next(
            (i for i, s in enumerate(self.toks) if s.tok.kind is TokenKind.IDENT and s.tok.text == "Triple"),
            None,
        )
        if start is None:
            if any(s.tok.kind is not TokenKind.EOF for s in self.toks):
                self.diags.append(Diagnostic(0, "no Triple(...) found in completion", "warning"))
            return
        self.pos = start
        while True:
            sig = self.peek()
            tok = sig.tok
            if self._is_stop(sig):
                return
            if tok.kind is TokenKind.RBRACKET:
                self.advance()
                return
            if tok.kind is TokenKind.COMMA:
                self.advance()
                continue
            if tok.kind is TokenKind.IDENT and tok.text == "Triple":
                self.depth = 0
                try:
                    t = self.parse_triple()
                except _SyntaxError as exc:
                    self.diags.append(Diagnostic(exc.tok.offset, exc.message))
                    if not self.resync():
                        return
                    continue
                if t is not None:
                    self.triples.append(t)
                continue
            self.diags.append(Diagnostic(tok.offset, f"unexpected {tok.raw!r} between triples; skipping"))
            self.depth = 0
            if not self.resync():
                return

    def resync(self) -> bool:
        """Skip to the next list-level ``Triple``; False when the list ended instead."""
        while True:
            sig = self.peek()
            tok = sig.tok
            if self._is_stop(sig):
                return False
            if tok.kind is TokenKind.IDENT and tok.text == "Triple" and (self.depth <= 0 or sig.line_start):
                return True
            if tok.kind in (TokenKind.LPAREN, TokenKind.LBRACKET):
                self.depth += 1
            elif tok.kind in (TokenKind.RPAREN, TokenKind.RBRACKET):
                if self.depth <= 0 and tok.kind is TokenKind.RBRACKET:
                    self.advance()
                    return False
                self.depth = max(0, self.depth - 1)
            self.advance()

    def parse_ctor(self, role: str) -> tuple[Token, Token]:
        name = self.expect(TokenKind.IDENT, f"{role} constructor")
        if name.text == "Triple":
            raise _SyntaxError(name, "nested Triple(...) is not allowed inside a triple")
        self.expect(TokenKind.LPAREN, "'('")
        value = self.expect(TokenKind.STRING, "string literal")
        if value.error:
            raise _SyntaxError(value, value.error)
        self.expect(TokenKind.RPAREN, "')'")
        return name, value

    def entity(self, name: Token, value: Token) -> EntityMention | None:
        text = normalize_surface(value.text)
        if not text:
            raise _SyntaxError(value, "empty entity text")
        etype = self.schema.entity_id_for_code(name.text) if self.schema else None
        if etype is None:
            if self.schema is not None:
                self.diags.append(
                    Diagnostic(name.offset, f"unknown entity class {name.text!r}; typed as {UNKNOWN}", "warning")
                )
            etype = UNKNOWN
        return EntityMention(text, etype)

    def relation(self, name: Token, value: Token) -> str:
        surface = normalize_surface(value.text)
        if name.text != "Rel":
            rt = self.schema.relation_for_code(name.text) if self.schema else None
            if rt is None and self.schema is not None:
                raise _SyntaxError(name, f"{name.text!r} is not a relation constructor")
            if not surface and rt is not None:
                surface = rt.surface
        if not surface:
            raise _SyntaxError(value, "empty relation")
        return surface

    def parse_triple(self) -> RelationTriple | None:
        self.expect(TokenKind.IDENT, "'Triple'")
        self.expect(TokenKind.LPAREN, "'(' after Triple")
        head = self.parse_ctor("head")
        self.expect(TokenKind.COMMA, "','")
        rel = self.parse_ctor("relation")
        self.expect(TokenKind.COMMA, "','")
        tail = self.parse_ctor("tail")
        if self.peek().tok.kind is TokenKind.COMMA:
            self.advance()
        self.expect(TokenKind.RPAREN, "')' closing Triple")
        n_before = len(self.diags)
        try:
            h = self.entity(*head)
            r = self.relation(*rel)
            t = self.entity(*tail)
        except _SyntaxError:
            del self.diags[n_before:]
            raise
        return RelationTriple(h, r, t)


def _significant(tokens: Iterable[Token]) -> list[_Sig]:
    out: list[_Sig] = []
    line_start = True
    for tok in tokens:
        if tok.kind is TokenKind.NEWLINE:
            line_start = True
            continue
        if tok.kind in _TRIVIA:
            continue
        out.append(_Sig(tok, line_start))
        line_start = False
    return out


def parse_completion(source: str | bytes, schema: Schema | None = None) -> ParseResult:
    """Recover relational triples from a model completion. Never raises on any input.

    Without a schema every entity is typed UNKNOWN and any identifier is
    accepted as the relation constructor.
    """
    p = _Parser(_significant(tokenize(source)), schema)
    p.run()
    return ParseResult(tuple(p.triples), tuple(p.diags), p.consumed)


def apply_stop_sequences(raw: str, stops: Iterable[str]) -> str:
    """Cut ``raw`` at the earliest occurrence of any non-empty stop string."""
    cut = len(raw)
    for s in stops:
        if not s:
            continue
        k = raw.find(s)
        if k != -1 and k < cut:
            cut = k
    return raw[:cut]


def default_stop_sequences(with_rationale: bool = False) -> tuple[str, ...]:
    """Stops used for generation; ``#`` is dropped when completions start with rationale comments."""
    if with_rationale:
        return ('"""', "\nclass")
    return ('"""', "\nclass", "#")


def dedupe_triples(triples: Iterable[RelationTriple], case_sensitive: bool = True) -> list[RelationTriple]:
    """Drop repeats of (head text, relation, tail text), keeping first occurrences."""
    seen: set[tuple[str, str, str]] = set()
    out = []
    for t in triples:
        k = t.key(case_sensitive)
        if k not in seen:
            seen.add(k)
            out.append(t)
    return out
