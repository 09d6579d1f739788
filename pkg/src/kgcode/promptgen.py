"""Render schemas, exemplars and target texts as code-format prompts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .core import (
    UNKNOWN,
    Document,
    EntityMention,
    RelationTriple,
    Schema,
    ValidationReport,
    normalize_surface,
    validate_schema,
)
from .datasets import ExemplarSet

COMPLETION_POINT = "extract = Extract([\n"
RATIONALE_COMPLETION_POINT = "# Relations in the text:"
RATIONALE_NOTE = "Construct the triples accordingly."
INDENT = "    "


class PromptError(ValueError):
    def __init__(self, message: str, report: ValidationReport | None = None):
        super().__init__(message if report is None else f"{message}\n{report}")
        self.report = report


class RelationStyle(str, enum.Enum):
    REL_WRAPPER = "REL_WRAPPER"
    DERIVED_CLASS = "DERIVED_CLASS"


@dataclass(frozen=True)
class PromptOptions:
    with_rationale: bool = False
    relation_style: RelationStyle = RelationStyle.REL_WRAPPER
    include_type_hints: bool = True
    max_prompt_chars: int | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> PromptOptions:
        return cls(
            with_rationale=bool(data.get("with_rationale", False)),
            relation_style=RelationStyle(str(data.get("relation_style", "REL_WRAPPER")).upper()),
            include_type_hints=bool(data.get("include_type_hints", True)),
            max_prompt_chars=data.get("max_prompt_chars"),  # type: ignore[arg-type]
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "with_rationale": self.with_rationale,
            "relation_style": self.relation_style.value,
            "include_type_hints": self.include_type_hints,
            "max_prompt_chars": self.max_prompt_chars,
        }


@dataclass(frozen=True)
class Prompt:
    text: str
    exemplar_ids: tuple[str, ...]
    schema_name: str
    options: PromptOptions
    dropped_exemplars: int = 0


@dataclass(frozen=True)
class Rationale:
    step_relations: tuple[str, ...]
    step_entities: tuple[tuple[str, str], ...]
    step_note: str = RATIONALE_NOTE


def escape_string(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def quote(s: str) -> str:
    return f'"{escape_string(s)}"'


def _class_block(name: str, base: str, description: str | None = None) -> str:
    body = f'{INDENT}""" {escape_string(description)} """' if description else f"{INDENT}pass"
    return f"class {name}({base}):\n{body}\n"


def _base_blocks(type_hints: bool) -> list[str]:
    name_sig = "self, name: str" if type_hints else "self, name"
    triple_sig = (
        "self, head: Entity, relation: Relation, tail: Entity" if type_hints else "self, head, relation, tail"
    )
    named = lambda cls: (  # noqa: E731
        f"class {cls}:\n{INDENT}def __init__({name_sig}):\n{INDENT * 2}self.name = name\n"
    )
    triple = (
        f"class Triple:\n{INDENT}def __init__({triple_sig}):\n"
        f"{INDENT * 2}self.head = head\n"
        f"{INDENT * 2}self.relation = relation\n"
        f"{INDENT * 2}self.tail = tail\n"
    )
    return [named("Entity"), named("Relation"), triple]


def _check_schema(schema: Schema, opts: PromptOptions) -> None:
    report = validate_schema(schema)
    if not report.ok:
        raise PromptError(f"schema {schema.name!r} is invalid", report)
    if opts.relation_style is RelationStyle.DERIVED_CLASS:
        missing = [rt.id for rt in schema.relation_types if not rt.code_name]
        if missing:
            raise PromptError(f"DERIVED_CLASS style needs a code_name for relation(s): {', '.join(missing)}")


def render_schema_preamble(schema: Schema, opts: PromptOptions = PromptOptions()) -> str:
    _check_schema(schema, opts)
    blocks = _base_blocks(opts.include_type_hints)
    blocks += [_class_block(et.code_name, "Entity", et.description) for et in schema.entity_types]
    if opts.relation_style is RelationStyle.DERIVED_CLASS:
        blocks += [_class_block(rt.code_name, "Relation") for rt in schema.relation_types]  # type: ignore[arg-type]
    else:
        blocks.append(_class_block("Rel", "Relation"))
    return "\n".join(blocks)


CodeResolver = Callable[[EntityMention], str]


def schema_resolver(schema: Schema, fallback: str | None = None) -> CodeResolver:
    def resolve(m: EntityMention) -> str:
        code = schema.entity_code_name(m.etype) if m.etype != UNKNOWN else None
        if code is None:
            if fallback is None:
                raise PromptError(f"cannot render entity type {m.etype!r}: not in schema {schema.name!r}")
            return fallback
        return code

    return resolve


def format_triple(head_code: str, head: str, rel_ctor: str, relation: str, tail_code: str, tail: str) -> str:
    return f"Triple({head_code}({quote(head)}), {rel_ctor}({quote(relation)}), {tail_code}({quote(tail)}))"


def _relation_ctor(t: RelationTriple, schema: Schema, opts: PromptOptions) -> str:
    if opts.relation_style is RelationStyle.REL_WRAPPER:
        return "Rel"
    rt = schema.relation_for_surface(normalize_surface(t.relation))
    if rt is None or not rt.code_name:
        raise PromptError(f"relation {t.relation!r} has no code_name in schema {schema.name!r}")
    return rt.code_name


def render_triple(
    t: RelationTriple,
    schema: Schema,
    opts: PromptOptions = PromptOptions(),
    resolve: CodeResolver | None = None,
) -> str:
    resolve = resolve or schema_resolver(schema)
    return format_triple(
        resolve(t.head), t.head.text, _relation_ctor(t, schema, opts), t.relation, resolve(t.tail), t.tail.text
    )


def build_rationale(doc: Document, schema: Schema, resolve: CodeResolver | None = None) -> Rationale:
    if not doc.gold:
        raise PromptError(f"document {doc.id!r} has no gold triples; rationales need at least one")
    resolve = resolve or schema_resolver(schema)
    position = {rt.id: i for i, rt in enumerate(schema.relation_types)}

    def schema_rank(surface: str) -> int:
        rt = schema.relation_for_surface(surface)
        return position[rt.id] if rt is not None else len(position)

    first_seen: dict[str, int] = {}
    for t in doc.gold:
        first_seen.setdefault(t.relation, len(first_seen))
    rels = sorted(first_seen, key=lambda r: (schema_rank(r), first_seen[r]))
    ents: dict[tuple[str, str], None] = {}
    for t in doc.gold:
        for m in (t.head, t.tail):
            ents.setdefault((resolve(m), m.text), None)
    return Rationale(tuple(rels), tuple(ents))


def render_rationale(doc: Document, schema: Schema, resolve: CodeResolver | None = None) -> str:
    r = build_rationale(doc, schema, resolve)
    entities = "; ".join(f"{code}({quote(text)})" for code, text in r.step_entities)
    return (
        f"{RATIONALE_COMPLETION_POINT} {', '.join(r.step_relations)}.\n"
        f"# Entities in the text: {entities}\n"
        f"# {r.step_note}\n"
    )


def _extract_header(text: str) -> str:
    return f'class Extract:\n{INDENT}""" {escape_string(text)} """\n\n'


def render_extract_block(text: str, triple_lines: Sequence[str], rationale: str = "") -> str:
    body = "".join(f"{INDENT}{line},\n" for line in triple_lines)
    return f"{_extract_header(text)}{rationale}{COMPLETION_POINT}{body}])\n"


def render_exemplar(doc: Document, schema: Schema, opts: PromptOptions = PromptOptions()) -> str:
    if not doc.gold:
        raise PromptError(f"document {doc.id!r} has no gold triples")
    lines = [render_triple(t, schema, opts) for t in doc.gold]
    rationale = render_rationale(doc, schema) if opts.with_rationale else ""
    return render_extract_block(doc.text, lines, rationale)


def render_target(text: str, opts: PromptOptions = PromptOptions()) -> str:
    """The unfinished Extract block the model continues from."""
    if opts.with_rationale:
        return _extract_header(text) + RATIONALE_COMPLETION_POINT
    return _extract_header(text) + COMPLETION_POINT


def completion_prefix(opts: PromptOptions = PromptOptions()) -> str:
    """Prompt tail to put back in front of a raw completion before parsing.

    In rationale mode the prompt stops inside the first comment line, so the
    completion alone would start with bare relation text.
    """
    return RATIONALE_COMPLETION_POINT if opts.with_rationale else ""


def render_completion(doc: Document, schema: Schema, opts: PromptOptions = PromptOptions()) -> str:
    """What an ideal model would append to ``render_target(doc.text, opts)``."""
    block = render_exemplar(doc, schema, opts)
    target = render_target(doc.text, opts)
    assert block.startswith(target)
    return block[len(target):].rstrip("\n")


def _exemplar_docs(exemplars: ExemplarSet | Sequence[Document]) -> tuple[Document, ...]:
    if isinstance(exemplars, ExemplarSet):
        return exemplars.exemplars
    return tuple(exemplars)


def build_prompt(
    schema: Schema,
    exemplars: ExemplarSet | Sequence[Document],
    target_text: str,
    opts: PromptOptions = PromptOptions(),
) -> Prompt:
    """Preamble, rendered exemplars, then the open target block.

    With ``max_prompt_chars`` set, exemplars are dropped from the end until the
    prompt fits; the preamble and target are never cut.
    """
    if not target_text.strip():
        raise PromptError("target text is empty")
    docs = _exemplar_docs(exemplars)
    preamble = render_schema_preamble(schema, opts)
    shots = [render_exemplar(d, schema, opts) for d in docs]
    target = render_target(target_text, opts)

    def assemble(n: int) -> str:
        return "\n".join([preamble, *shots[:n], target])

    keep = len(shots)
    text = assemble(keep)
    if opts.max_prompt_chars is not None:
        while len(text) > opts.max_prompt_chars and keep > 0:
            keep -= 1
            text = assemble(keep)
        if len(text) > opts.max_prompt_chars:
            raise PromptError(
                f"preamble and target block need {len(text)} chars, over the budget of {opts.max_prompt_chars}"
            )
    return Prompt(text, tuple(d.id for d in docs[:keep]), schema.name, opts, len(shots) - keep)


def substitute_synonyms(exemplars: ExemplarSet, synonym_map: Mapping[str, str]) -> ExemplarSet:
    """Replace relation surfaces in exemplar gold triples; entities are left alone."""
    norm_map = {normalize_surface(k): normalize_surface(v) for k, v in synonym_map.items()}
    docs = []
    for doc in exemplars.exemplars:
        gold = []
        for t in doc.gold:
            rel = normalize_surface(t.relation)
            if rel not in norm_map:
                raise PromptError(f"no synonym given for relation {t.relation!r}")
            gold.append(replace(t, relation=norm_map[rel]))
        docs.append(replace(doc, gold=tuple(gold)))
    return replace(exemplars, exemplars=tuple(docs))
