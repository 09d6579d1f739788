"""Random generators and independent oracles shared by the test modules."""

from __future__ import annotations

import random
import string
from itertools import combinations

from kgcode.core import Document, EntityMention, EntityType, RelationTriple, RelationType, Schema, normalize_surface

TRICKY = ['"', "\\", "'", "#", "(", ")", "[", "]", ",", "=", "é", "ß", "中文", "🙂", " ", "\t", "Triple", "class", '"""', "\\\""]


def random_surface(rng: random.Random, max_parts: int = 4) -> str:
    """A non-empty normalized string mixing ASCII, quotes, backslashes and unicode."""
    while True:
        parts = []
        for _ in range(rng.randint(1, max_parts)):
            kind = rng.random()
            if kind < 0.5:
                parts.append("".join(rng.choice(string.ascii_letters + string.digits) for _ in range(rng.randint(1, 6))))
            elif kind < 0.85:
                parts.append(rng.choice(TRICKY))
            else:
                parts.append(chr(rng.randint(0xA1, 0x2FFF)))
            parts.append(rng.choice(["", " ", "  "]))
        s = normalize_surface("".join(parts))
        if s:
            return s


def random_schema(rng: random.Random, n_ent: int = 3, n_rel: int = 3) -> Schema:
    ents = tuple(EntityType(f"e{i}", f"Ent{i}{rng.choice('ABC')}") for i in range(n_ent))
    rels = tuple(RelationType(f"r{i}", f"rel {i} {rng.choice(['x', 'y'])}", f"Rel{i}Kind") for i in range(n_rel))
    return Schema("random", ents, rels)


def random_document(rng: random.Random, schema: Schema, doc_id: str, max_triples: int = 5) -> Document:
    gold = []
    for _ in range(rng.randint(1, max_triples)):
        h = EntityMention(random_surface(rng), rng.choice(schema.entity_types).id)
        t = EntityMention(random_surface(rng), rng.choice(schema.entity_types).id)
        rel = random_surface(rng) if rng.random() < 0.5 else rng.choice(schema.relation_types).surface
        gold.append(RelationTriple(h, rel, t))
    text = random_surface(rng, 8) + rng.choice(["", "\nsecond line", ' with """ quotes'])
    return Document(doc_id, text, tuple(gold))


def brute_force_counts(gold: list[RelationTriple], pred: list[RelationTriple]) -> tuple[int, int, int]:
    """Exact-match counts by explicit pairing over list-deduplicated triples."""

    def dedup(ts):
        out = []
        for t in ts:
            k = (normalize_surface(t.head.text), normalize_surface(t.relation), normalize_surface(t.tail.text))
            if k not in out:
                out.append(k)
        return out

    g, p = dedup(gold), dedup(pred)
    used = [False] * len(g)
    tp = 0
    for pk in p:
        for i, gk in enumerate(g):
            if not used[i] and gk[0] == pk[0] and gk[1] == pk[1] and gk[2] == pk[2]:
                used[i] = True
                tp += 1
                break
    return tp, len(p) - tp, len(g) - tp


def brute_force_is_hard(gold: list[RelationTriple]) -> bool:
    """Enumerate every entity pair across distinct triples."""
    distinct = []
    for t in gold:
        k = (normalize_surface(t.head.text), normalize_surface(t.relation), normalize_surface(t.tail.text))
        if k not in distinct:
            distinct.append(k)
    for a, b in combinations(distinct, 2):
        for x in (a[0], a[2]):
            for y in (b[0], b[2]):
                if x == y:
                    return True
                if x != y and (x in y or y in x):
                    return True
    return False


def minimal_cover_size(rel_sets: list[set[str]], universe: set[str]) -> int | None:
    for size in range(len(rel_sets) + 1):
        for combo in combinations(range(len(rel_sets)), size):
            covered = set().union(*(rel_sets[i] for i in combo)) if combo else set()
            if universe <= covered:
                return size
    return None


def clean_triple_count(source: str | bytes) -> int | None:
    """Independent pattern matcher for the triple list.

    Returns the number of well-formed ``Triple(X("..."), Y("..."), Z("..."))``
    items after the first ``Triple``, or None when some token in that region
    does not fit the pattern (a segment the parser would have to skip).
    """
    from kgcode.codeparse import TokenKind as K
    from kgcode.codeparse import tokenize

    sig, line_start = [], True
    for tok in tokenize(source):
        if tok.kind is K.NEWLINE:
            line_start = True
        elif tok.kind not in (K.WHITESPACE, K.COMMENT):
            sig.append((tok, line_start))
            line_start = False
    starts = [i for i, (t, _) in enumerate(sig) if t.kind is K.IDENT and t.text == "Triple"]
    if not starts:
        return 0
    i, count = starts[0], 0
    ctor = [K.IDENT, K.LPAREN, K.STRING, K.RPAREN]
    shape = [K.IDENT, K.LPAREN] + ctor + [K.COMMA] + ctor + [K.COMMA] + ctor
    while True:
        tok, at_line_start = sig[i]
        if tok.kind is K.EOF or tok.kind is K.RBRACKET:
            return count
        if tok.kind is K.IDENT and tok.text == "class" and at_line_start:
            return count
        if tok.kind is K.COMMA:
            i += 1
            continue
        window = sig[i:i + len(shape)]
        if len(window) < len(shape) or [t.kind for t, _ in window] != shape or window[0][0].text != "Triple":
            return None
        if any(t.kind is K.STRING and t.error for t, _ in window):
            return None
        if any(t.kind is K.IDENT and t.text == "Triple" for t, _ in window[1:]):
            return None
        i += len(shape)
        if sig[i][0].kind is K.COMMA:
            i += 1
        if sig[i][0].kind is not K.RPAREN:
            return None
        i += 1
        count += 1
