"""Build canned completion maps for offline pipeline checks."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from .core import Schema
from .datasets import Dataset
from .promptgen import PromptOptions, render_completion


def gold_echo_fixture(ds: Dataset, schema: Schema, opts: PromptOptions = PromptOptions()) -> dict[str, str]:
    """Map each document id to the completion a perfect model would produce."""
    return {d.id: render_completion(d, schema, opts) for d in ds.documents if d.gold}


def drop_one_fixture(ds: Dataset, schema: Schema, opts: PromptOptions = PromptOptions()) -> dict[str, str]:
    """Like the gold echo, but the last triple of every multi-triple document is omitted."""
    out = {}
    for d in ds.documents:
        if not d.gold:
            continue
        if len(d.gold) > 1:
            d = replace(d, gold=d.gold[:-1])
        out[d.id] = render_completion(d, schema, opts)
    return out


def write_fixture(mapping: dict[str, str], path: str | Path) -> None:
    Path(path).write_text(json.dumps(mapping, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")
