"""Stream aligned (sentence, triples) records into sharded code-format text."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO

from .core import (
    RESERVED_IDENTIFIERS,
    UNKNOWN,
    EntityMention,
    RelationTriple,
    Schema,
    is_identifier,
    normalize_surface,
)
from .datasets import parse_document
from .promptgen import format_triple, render_extract_block

logger = logging.getLogger(__name__)

STATS_FILE = "stats.json"


@dataclass(frozen=True)
class AlignedRecord:
    text: str
    triples: tuple[RelationTriple, ...] = ()


@dataclass(frozen=True)
class CorpusStats:
    sentences: int = 0
    triples: int = 0
    distinct_relations: int = 0
    skipped: int = 0

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


def _type_code(etype: str, fallback: str, schema: Schema | None) -> str:
    if etype == UNKNOWN:
        return fallback
    if schema is not None:
        code = schema.entity_code_name(etype)
        if code is not None:
            return code
    # "organization" -> "Organization", "work_of art" -> "WorkOfArt"
    code = "".join(part[:1].upper() + part[1:] for part in re.split(r"[^A-Za-z0-9]+", etype) if part)
    if not is_identifier(code) or code in RESERVED_IDENTIFIERS:
        return fallback
    return code


def restructure_record(
    rec: AlignedRecord, fallback_entity_code: str = "Ent", schema: Schema | None = None
) -> str | None:
    """One Extract block for a record, or None when it has no triples (skip it)."""
    if not rec.triples:
        return None
    if not is_identifier(fallback_entity_code) or fallback_entity_code in RESERVED_IDENTIFIERS:
        raise ValueError(f"fallback entity code {fallback_entity_code!r} is not a usable identifier")

    def code(m: EntityMention) -> str:
        return _type_code(m.etype, fallback_entity_code, schema)

    lines = [format_triple(code(t.head), t.head.text, "Rel", t.relation, code(t.tail), t.tail.text) for t in rec.triples]
    # blank lines inside a docstring would break the one-blank-line block separator
    return render_extract_block(normalize_surface(rec.text), lines)


class _ShardWriter:
    def __init__(self, out_dir: Path, shard_size: int, prefix: str):
        self.out_dir = out_dir
        self.shard_size = shard_size
        self.prefix = prefix
        self.index = -1
        self.in_shard = 0
        self.fh: IO[str] | None = None

    def write(self, block: str) -> None:
        if self.fh is None or self.in_shard >= self.shard_size:
            self.close()
            self.index += 1
            path = self.out_dir / f"{self.prefix}-{self.index:05d}.txt"
            self.fh = path.open("w", encoding="utf-8")
            self.in_shard = 0
        if self.in_shard:
            self.fh.write("\n")
        self.fh.write(block)
        self.in_shard += 1

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()
            self.fh = None


def restructure_stream(
    input_path: str | Path,
    out_dir: str | Path,
    shard_size: int = 10_000,
    fallback_entity_code: str = "Ent",
    schema: Schema | None = None,
    prefix: str = "shard",
) -> CorpusStats:
    """Convert a JSONL aligned corpus into text shards of ``shard_size`` blocks each.

    Reads one line at a time. Malformed lines, blank lines and records without
    triples are counted as skipped. Stats are also written to ``stats.json``.
    """
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writer = _ShardWriter(out, shard_size, prefix)
    sentences = n_triples = skipped = 0
    relations: set[str] = set()
    try:
        with Path(input_path).open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                try:
                    data = json.loads(line)
                    if isinstance(data, dict) and "id" not in data:
                        data = {**data, "id": str(lineno)}
                    doc = parse_document(data)
                except (ValueError, TypeError) as exc:
                    logger.debug("line %d skipped: %s", lineno, exc)
                    skipped += 1
                    continue
                block = restructure_record(AlignedRecord(doc.text, doc.gold), fallback_entity_code, schema)
                if block is None:
                    skipped += 1
                    continue
                writer.write(block)
                sentences += 1
                n_triples += len(doc.gold)
                relations.update(t.relation for t in doc.gold)
    finally:
        writer.close()
    stats = CorpusStats(sentences, n_triples, len(relations), skipped)
    (out / STATS_FILE).write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats
