"""Line-delimited dataset loading, seeded subsampling and exemplar selection."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .core import (
    UNKNOWN,
    Document,
    RelationTriple,
    Schema,
    detect_overlap,
    normalize_surface,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoadDiagnostic:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass(frozen=True)
class Dataset:
    schema_ref: str
    documents: tuple[Document, ...]
    diagnostics: tuple[LoadDiagnostic, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def by_id(self) -> dict[str, Document]:
        return {d.id: d for d in self.documents}

    def replace(self, documents: Iterable[Document]) -> Dataset:
        return Dataset(self.schema_ref, tuple(documents), self.diagnostics)


@dataclass(frozen=True)
class ExemplarSet:
    exemplars: tuple[Document, ...]
    covered_relations: frozenset[str]
    seed: int = 0

    def ids(self) -> list[str]:
        return [d.id for d in self.exemplars]


class UncoveredRelationError(ValueError):
    def __init__(self, missing: list[str]):
        super().__init__(f"no training document contains relation(s): {', '.join(missing)}")
        self.missing = missing


def parse_document(data: object) -> Document:
    """Build a normalized Document from one decoded JSON line; raises on bad shape."""
    if not isinstance(data, dict):
        raise TypeError("line is not a JSON object")
    doc_id, text = data.get("id"), data.get("text")
    if not isinstance(doc_id, (str, int)) or str(doc_id) == "":
        raise ValueError("missing or empty 'id'")
    if not isinstance(text, str) or not text.strip():
        raise ValueError("missing or empty 'text'")
    raw_triples = data.get("triples", [])
    if not isinstance(raw_triples, list):
        raise TypeError("'triples' must be a list")
    gold = []
    for i, rt in enumerate(raw_triples):
        try:
            t = RelationTriple.from_dict(rt).normalized()
        except (KeyError, TypeError) as exc:
            raise ValueError(f"triple {i}: {exc}") from exc
        if not t.head.text or not t.tail.text or not t.relation:
            raise ValueError(f"triple {i}: empty entity or relation text")
        gold.append(t)
    return Document(str(doc_id), text, tuple(gold))


def _schema_mismatches(doc: Document, schema: Schema) -> list[str]:
    out = []
    for t in doc.gold:
        if schema.relation_for_surface(t.relation) is None:
            out.append(f"document {doc.id!r}: relation {t.relation!r} not in schema")
        for m in (t.head, t.tail):
            if m.etype != UNKNOWN and schema.entity_code_name(m.etype) is None:
                out.append(f"document {doc.id!r}: entity type {m.etype!r} not in schema")
    return out


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Load a JSONL dataset. Malformed lines are skipped with a diagnostic.

    Schema mismatches (unknown relations or entity types) are reported but
    the document is kept. An unreadable file raises ``OSError``.
    """
    path = Path(path)
    docs: list[Document] = []
    diags: list[LoadDiagnostic] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                doc = parse_document(json.loads(line))
            except (ValueError, TypeError) as exc:
                diags.append(LoadDiagnostic(lineno, f"malformed: {exc}"))
                continue
            if doc.id in seen:
                diags.append(LoadDiagnostic(lineno, f"duplicate document id {doc.id!r}"))
                continue
            seen.add(doc.id)
            diags.extend(LoadDiagnostic(lineno, msg) for msg in _schema_mismatches(doc, schema))
            docs.append(doc)
    for d in diags:
        logger.warning("%s: %s", path.name, d)
    return Dataset(schema.name, tuple(docs), tuple(diags))


def save_dataset(ds: Dataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for doc in ds.documents:
            f.write(json.dumps(doc.to_dict(), ensure_ascii=False) + "\n")


def sample_subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniformly sample ``n`` documents without replacement, keeping file order."""
    size = len(ds.documents)
    if n < 0 or n > size:
        raise ValueError(f"cannot sample {n} documents from a dataset of {size}")
    picked = sorted(random.Random(seed).sample(range(size), n))
    return ds.replace(ds.documents[i] for i in picked)


def relation_ids_of(doc: Document, schema: Schema) -> set[str]:
    """Schema relation ids present in a document's gold triples."""
    out = set()
    for t in doc.gold:
        rt = schema.relation_for_surface(normalize_surface(t.relation))
        if rt is not None:
            out.add(rt.id)
    return out


def select_exemplars(train: Dataset, schema: Schema, k_per_relation: int, seed: int) -> ExemplarSet:
    """Greedy seeded cover: every schema relation gets up to ``k_per_relation`` exemplars.

    Relations are visited in schema order; documents already chosen for an
    earlier relation count towards later quotas.
    """
    rels_per_doc = [relation_ids_of(d, schema) for d in train.documents]
    present = set().union(*rels_per_doc) if rels_per_doc else set()
    missing = [rt.id for rt in schema.relation_types if rt.id not in present]
    if missing:
        raise UncoveredRelationError(missing)

    rng = random.Random(seed)
    chosen: list[int] = []
    chosen_set: set[int] = set()
    for rt in schema.relation_types:
        have = sum(1 for i in chosen if rt.id in rels_per_doc[i])
        if have >= k_per_relation:
            continue
        pool = [i for i, rels in enumerate(rels_per_doc) if rt.id in rels and i not in chosen_set]
        rng.shuffle(pool)
        for i in pool[: k_per_relation - have]:
            chosen.append(i)
            chosen_set.add(i)

    exemplars = tuple(train.documents[i] for i in chosen)
    covered = frozenset().union(*(rels_per_doc[i] for i in chosen)) if chosen else frozenset()
    return ExemplarSet(exemplars, covered, seed)


def hard_subset(ds: Dataset) -> Dataset:
    return ds.replace(d for d in ds.documents if detect_overlap(d).is_hard)
