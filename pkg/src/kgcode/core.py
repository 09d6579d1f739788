"""Shared domain types: schemas, documents, triples, normalization and overlap detection."""

from __future__ import annotations

import json
import keyword
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable

UNKNOWN = "UNKNOWN"

RESERVED_IDENTIFIERS = frozenset({"Entity", "Relation", "Triple", "Rel", "Extract"})

_IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_WS_RE = re.compile(r"\s+")


class SchemaError(ValueError):
    """Raised when a schema document is structurally unusable."""


def normalize_surface(s: str, case_sensitive: bool = True) -> str:
    """Trim and collapse internal whitespace runs to single spaces.

    Case is preserved unless ``case_sensitive`` is False, in which case the
    result is casefolded as well.
    """
    out = _WS_RE.sub(" ", s).strip()
    return out if case_sensitive else out.casefold()


def is_identifier(name: str) -> bool:
    return bool(_IDENTIFIER_RE.match(name))


@dataclass(frozen=True)
class EntityType:
    id: str
    code_name: str
    description: str | None = None


@dataclass(frozen=True)
class RelationType:
    id: str
    surface: str
    code_name: str | None = None
    domain: str | None = None
    range: str | None = None


@dataclass(frozen=True)
class Schema:
    name: str
    entity_types: tuple[EntityType, ...]
    relation_types: tuple[RelationType, ...]

    def entity_code_name(self, etype: str) -> str | None:
        for et in self.entity_types:
            if et.id == etype:
                return et.code_name
        return None

    def entity_id_for_code(self, code_name: str) -> str | None:
        for et in self.entity_types:
            if et.code_name == code_name:
                return et.id
        return None

    def relation_for_code(self, code_name: str) -> RelationType | None:
        for rt in self.relation_types:
            if rt.code_name == code_name:
                return rt
        return None

    def relation_for_surface(self, surface: str) -> RelationType | None:
        """Find the relation type whose surface (or, failing that, id) equals ``surface``."""
        for rt in self.relation_types:
            if rt.surface == surface:
                return rt
        for rt in self.relation_types:
            if rt.id == surface:
                return rt
        return None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Schema:
        try:
            ents = tuple(
                EntityType(
                    id=str(e["id"]),
                    code_name=str(e["code_name"]),
                    description=e.get("description"),
                )
                for e in data["entity_types"]
            )
            rels = tuple(
                RelationType(
                    id=str(r["id"]),
                    surface=normalize_surface(str(r["surface"])),
                    code_name=r.get("code_name"),
                    domain=r.get("domain"),
                    range=r.get("range"),
                )
                for r in data["relation_types"]
            )
            return cls(name=str(data["name"]), entity_types=ents, relation_types=rels)
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"malformed schema document: {exc!r}") from exc

    def to_dict(self) -> dict[str, Any]:
        def _strip(d: dict[str, Any]) -> dict[str, Any]:
            return {k: v for k, v in d.items() if v is not None}

        return {
            "name": self.name,
            "entity_types": [
                _strip({"id": e.id, "code_name": e.code_name, "description": e.description})
                for e in self.entity_types
            ],
            "relation_types": [
                _strip(
                    {
                        "id": r.id,
                        "surface": r.surface,
                        "code_name": r.code_name,
                        "domain": r.domain,
                        "range": r.range,
                    }
                )
                for r in self.relation_types
            ],
        }


def load_schema(path: str | Path) -> Schema:
    """Read a schema JSON file. I/O errors propagate; bad structure raises SchemaError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return Schema.from_dict(data)


@dataclass(frozen=True)
class EntityMention:
    text: str
    etype: str = UNKNOWN


@dataclass(frozen=True)
class RelationTriple:
    head: EntityMention
    relation: str
    tail: EntityMention

    def key(self, case_sensitive: bool = True) -> tuple[str, str, str]:
        """Scoring key: entity types are deliberately left out."""
        return (
            normalize_surface(self.head.text, case_sensitive),
            normalize_surface(self.relation, case_sensitive),
            normalize_surface(self.tail.text, case_sensitive),
        )

    def normalized(self) -> RelationTriple:
        return RelationTriple(
            EntityMention(normalize_surface(self.head.text), self.head.etype),
            normalize_surface(self.relation),
            EntityMention(normalize_surface(self.tail.text), self.tail.etype),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "head": {"text": self.head.text, "type": self.head.etype},
            "relation": self.relation,
            "tail": {"text": self.tail.text, "type": self.tail.etype},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RelationTriple:
        head, tail = data["head"], data["tail"]
        if not isinstance(head, dict) or not isinstance(tail, dict):
            raise TypeError("head and tail must be objects")
        rel = data["relation"]
        if not isinstance(rel, str) or not isinstance(head["text"], str) or not isinstance(tail["text"], str):
            raise TypeError("relation and entity texts must be strings")
        return cls(
            EntityMention(head["text"], str(head.get("type") or UNKNOWN)),
            rel,
            EntityMention(tail["text"], str(tail.get("type") or UNKNOWN)),
        )


def triple(head: str, relation: str, tail: str, head_type: str = UNKNOWN, tail_type: str = UNKNOWN) -> RelationTriple:
    """Shorthand constructor, mostly for tests and interactive use."""
    return RelationTriple(EntityMention(head, head_type), relation, EntityMention(tail, tail_type))


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    gold: tuple[RelationTriple, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "triples": [t.to_dict() for t in self.gold]}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"- {v}" for v in self.violations)


def validate_schema(schema: Schema) -> ValidationReport:
    """Collect every schema invariant violation; never raises."""
    problems: list[str] = []
    if not schema.entity_types:
        problems.append("entity_types is empty")
    if not schema.relation_types:
        problems.append("relation_types is empty")

    def check_code(name: str | None, owner: str) -> None:
        if not name:
            problems.append(f"{owner}: empty code_name")
        elif not is_identifier(name):
            problems.append(f"{owner}: code_name {name!r} is not an identifier")
        elif name in RESERVED_IDENTIFIERS:
            problems.append(f"{owner}: code_name {name!r} is a reserved identifier")
        elif keyword.iskeyword(name):
            problems.append(f"{owner}: code_name {name!r} is a Python keyword")

    seen_codes: dict[str, str] = {}

    def check_unique(name: str | None, owner: str) -> None:
        if not name:
            return
        if name in seen_codes:
            problems.append(f"{owner}: duplicate code_name {name!r} (also used by {seen_codes[name]})")
        else:
            seen_codes[name] = owner

    entity_ids: set[str] = set()
    for et in schema.entity_types:
        owner = f"entity type {et.id!r}"
        if et.id in entity_ids:
            problems.append(f"{owner}: duplicate id")
        entity_ids.add(et.id)
        check_code(et.code_name, owner)
        check_unique(et.code_name, owner)

    relation_ids: set[str] = set()
    for rt in schema.relation_types:
        owner = f"relation type {rt.id!r}"
        if rt.id in relation_ids:
            problems.append(f"{owner}: duplicate id")
        relation_ids.add(rt.id)
        if not normalize_surface(rt.surface):
            problems.append(f"{owner}: empty surface")
        if rt.code_name is not None:
            check_code(rt.code_name, owner)
            check_unique(rt.code_name, owner)
        for side, ref in (("domain", rt.domain), ("range", rt.range)):
            if ref is not None and ref not in entity_ids:
                problems.append(f"{owner}: {side} {ref!r} is not an entity type id")
    return ValidationReport(tuple(problems))


@dataclass(frozen=True)
class OverlapReport:
    is_hard: bool
    # (triple index, triple index, shared text)
    shared_entity_pairs: tuple[tuple[int, int, str], ...] = field(default=())
    # (triple index of inner, triple index of outer, inner text, outer text)
    nested_span_pairs: tuple[tuple[int, int, str, str], ...] = field(default=())


def _distinct_triples(gold: Iterable[RelationTriple]) -> list[RelationTriple]:
    seen: set[tuple[str, str, str]] = set()
    out = []
    for t in gold:
        k = t.key()
        if k not in seen:
            seen.add(k)
            out.append(t)
    return out


def detect_overlap(doc: Document) -> OverlapReport:
    """Classify a document as hard when its gold triples share or nest entity strings.

    Shared: one normalized entity text occurs in two distinct triples.
    Nested: an entity text of one triple is a strict substring of an entity
    text of another triple.
    """
    triples = _distinct_triples(doc.gold)
    ents = [
        {normalize_surface(t.head.text), normalize_surface(t.tail.text)} - {""}
        for t in triples
    ]
    shared: list[tuple[int, int, str]] = []
    nested: list[tuple[int, int, str, str]] = []
    for i, j in combinations(range(len(triples)), 2):
        for text in sorted(ents[i] & ents[j]):
            shared.append((i, j, text))
        for a, b in ((i, j), (j, i)):
            for inner in sorted(ents[a]):
                for outer in sorted(ents[b]):
                    if inner != outer and inner in outer:
                        nested.append((a, b, inner, outer))
    return OverlapReport(bool(shared or nested), tuple(shared), tuple(nested))
