import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import clean_triple_count
from kgcode.codeparse import (
    TokenKind,
    apply_stop_sequences,
    default_stop_sequences,
    dedupe_triples,
    parse_completion,
    tokenize,
)
from kgcode.core import UNKNOWN, triple

K = TokenKind


def _kinds(src):
    return [(t.kind, t.text) for t in tokenize(src) if t.kind not in (K.WHITESPACE, K.EOF)]


def test_tokenize_ctor():
    assert _kinds('Rel("work for")') == [(K.IDENT, "Rel"), (K.LPAREN, "("), (K.STRING, "work for"), (K.RPAREN, ")")]


def test_tokenize_escape():
    toks = tokenize('"a\\"b"')
    assert toks[0].kind is K.STRING and toks[0].text == 'a"b' and toks[0].raw == '"a\\"b"'


def test_tokenize_comment():
    assert _kinds("# step 1") == [(K.COMMENT, "# step 1")]


def test_tokenize_single_quotes_and_unterminated():
    toks = tokenize("'x' \"open\nnext")
    strings = [t for t in toks if t.kind is K.STRING]
    assert strings[0].text == "x" and strings[0].error is None
    assert strings[1].text == "open" and strings[1].error == "unterminated string"
    assert toks[-2].text == "next"


def test_tokenize_invalid_utf8():
    toks = tokenize(b"ab\xff\xfe(")
    unknown = [t for t in toks if t.kind is K.UNKNOWN]
    assert len(unknown) == 2 and all(t.error for t in unknown)
    assert [t.offset for t in toks] == [0, 2, 3, 4, 5]


def test_tokenize_byte_offsets():
    toks = tokenize('é("中")')
    assert [(t.kind, t.offset) for t in toks] == [
        (K.UNKNOWN, 0), (K.LPAREN, 2), (K.STRING, 3), (K.RPAREN, 8), (K.EOF, 9)
    ]


@settings(max_examples=300, deadline=None)
@given(st.text())
def test_token_coverage_text(s):
    toks = tokenize(s)
    assert "".join(t.raw for t in toks) == s
    assert toks[-1].kind is K.EOF
    offs = [t.offset for t in toks]
    assert all(a < b for a, b in zip(offs, offs[1:]))
    assert toks[-1].offset == len(s.encode("utf-8", "surrogatepass"))


@settings(max_examples=300, deadline=None)
@given(st.binary())
def test_token_coverage_bytes(b):
    toks = tokenize(b)
    assert "".join(t.raw for t in toks).encode("utf-8", "surrogateescape") == b
    assert toks[-1].offset == len(b)


def test_parse_simple(conll_schema):
    res = parse_completion('Triple(Person("John"), Rel("work for"), Organization("IBM"))])', conll_schema)
    assert [t.key() for t in res.triples] == [("John", "work for", "IBM")]
    assert res.triples[0].head.etype == "person" and res.diagnostics == ()


def test_parse_unknown_class(conll_schema):
    res = parse_completion('Triple(Foo("x"), Rel("r"), Person("y"))', conll_schema)
    assert len(res.triples) == 1 and res.triples[0].head.etype == UNKNOWN
    assert len(res.diagnostics) == 1


def test_parse_recovers(conll_schema):
    src = 'Triple(Person("a"), Rel("r") Person("b")), Triple(Person("c"), Rel("s"), Person("d"))])'
    res = parse_completion(src, conll_schema)
    assert [t.key() for t in res.triples] == [("c", "s", "d")]
    assert len(res.diagnostics) == 1
    assert res.diagnostics[0].offset == src.index('Person("b")')


def test_parse_skips_prefix_and_stops_at_class(conll_schema):
    src = ('extract = Extract([\n    Triple(Person("a"), Rel("kill"), Person("b")),\n])\n'
           'class Extract:\n    Triple(Person("x"), Rel("kill"), Person("y"))')
    res = parse_completion(src, conll_schema)
    assert len(res.triples) == 1 and res.diagnostics == ()
    assert res.consumed_bytes == src.index("])") + 1
    no_bracket = src.replace("])", "")
    res = parse_completion(no_bracket, conll_schema)
    assert len(res.triples) == 1 and res.diagnostics == ()


def test_parse_derived_class_relation(conll_schema):
    res = parse_completion('Triple(Person("a"), WorkFor(""), Organization("b"))', conll_schema)
    assert res.triples[0].relation == "work for"
    bad = parse_completion('Triple(Person("a"), Bogus("x"), Organization("b"))', conll_schema)
    assert bad.triples == () and bad.diagnostics


def test_parse_nested_triple_rejected():
    res = parse_completion('Triple(Triple(A("a"), R("r"), B("b")), R("r"), B("b")), Triple(A("c"), R("s"), B("d"))')
    assert [t.key() for t in res.triples] == [("c", "s", "d")]
    assert res.diagnostics


def test_parse_no_schema_types_unknown():
    res = parse_completion('Triple(A("a"), Anything("r"), B("b"))')
    assert res.triples[0].relation == "r" and res.triples[0].head.etype == UNKNOWN
    assert res.diagnostics == ()


def test_parse_empty_and_garbage():
    assert parse_completion("").diagnostics == ()
    res = parse_completion("no triples here")
    assert res.triples == () and len(res.diagnostics) == 1


def test_parse_result_json(conll_schema):
    d = parse_completion('Triple(Person("a"), Rel("kill"), Person("b"))', conll_schema).to_dict()
    assert set(d) == {"triples", "diagnostics", "consumed_bytes"}


def test_stop_examples():
    assert apply_stop_sequences('...])\nclass Foo', ["\nclass"]) == "...])"
    assert apply_stop_sequences("plain", ["#", "\nclass"]) == "plain"
    raw = 'Triple(A("a"), Rel("r"), B("b"))  # note\nclass X'
    assert apply_stop_sequences(raw, list(default_stop_sequences())) == 'Triple(A("a"), Rel("r"), B("b"))  '


def test_default_stops():
    assert "#" in default_stop_sequences(False)
    assert "#" not in default_stop_sequences(True)


def test_dedupe_examples():
    ab = triple("a", "r", "b")
    assert dedupe_triples([ab, ab]) == [ab]
    assert len(dedupe_triples([ab, triple("b", "r", "a")])) == 2
    typed = triple("a", "r", "b", "person", "person")
    assert dedupe_triples([typed, ab]) == [typed]


def test_fuzz_mutations_clean_iff_no_diagnostics(conll_schema):
    rng = random.Random(0)
    base = 'Triple(Person("a"), Rel("kill"), Person("b")),\n    Triple(Person("c"), Rel("work for"), Organization("d")),\n])'
    alphabet = '()[],="\'#\n Triple Rel Person x\\'
    for _ in range(2000):
        s = list(base)
        for _ in range(rng.randint(1, 4)):
            k = rng.randrange(len(s) + 1)
            op = rng.random()
            if op < 0.4 and s:
                del s[min(k, len(s) - 1)]
            elif op < 0.8:
                s.insert(k, rng.choice(alphabet))
            elif s:
                s[min(k, len(s) - 1)] = rng.choice(alphabet)
        src = "".join(s)
        res = parse_completion(src, conll_schema)
        expected = clean_triple_count(src)
        if expected is None:
            assert res.diagnostics, src
        if not res.diagnostics:
            assert expected == len(res.triples), src
