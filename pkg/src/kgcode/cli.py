"""Command-line entry point.

Exit codes: 0 success, 1 validation/scoring failure, 2 I/O error, 3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .core import SchemaError, load_schema, validate_schema
from .datasets import hard_subset, load_dataset, save_dataset
from .llm import BackendConfig, BackendKind
from .promptgen import PromptError, build_prompt
from .restructure import restructure_stream
from .runner import (
    FEW_SHOT,
    ZERO_SHOT,
    BackendFailure,
    ConfigError,
    RunConfig,
    Workspace,
    evaluate_files,
    run_experiment,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_BACKEND = 3


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_validate(schema_path: str) -> int:
    try:
        schema = load_schema(schema_path)
    except OSError as exc:
        _err(f"cannot read {schema_path}: {exc.strerror or exc}")
        return EXIT_IO
    except SchemaError as exc:
        _err(str(exc))
        return EXIT_INVALID
    report = validate_schema(schema)
    if report.ok:
        print(f"{schema.name}: ok ({len(schema.entity_types)} entity types, {len(schema.relation_types)} relation types)")
        return EXIT_OK
    print(f"{schema.name}: {len(report.violations)} violation(s)")
    print(report)
    return EXIT_INVALID


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes = {}
    if getattr(args, "out_dir", None):
        changes["out_dir"] = Path(args.out_dir)
    for name in ("seed", "repeats", "k_per_relation", "sample"):
        if getattr(args, name, None) is not None:
            changes[name] = getattr(args, name)
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "synonyms", None):
        changes["synonym_map_path"] = Path(args.synonyms)
    if getattr(args, "with_rationale", False):
        changes["prompt"] = replace(cfg.prompt, with_rationale=True)
    backend = cfg.backend
    if getattr(args, "fixture", None):
        backend = BackendConfig(kind=BackendKind.FIXTURE, fixture_path=str(Path(args.fixture).resolve()),
                                max_concurrency=backend.max_concurrency)
    if getattr(args, "max_concurrency", None):
        backend = replace(backend, max_concurrency=args.max_concurrency)
    changes["backend"] = backend
    return replace(cfg, **changes)


def _load_config(args: argparse.Namespace) -> RunConfig:
    return _apply_overrides(RunConfig.load(args.config), args)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        agg = run_experiment(cfg)
    except BackendFailure as exc:
        _err(str(exc))
        return EXIT_BACKEND
    except OSError as exc:
        _err(f"I/O: {exc}")
        return EXIT_IO
    except (ConfigError, SchemaError, PromptError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    print((cfg.out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    print(f"mean F1 {agg.mean_f1:.4f} over {len(agg.runs)} run(s); artifacts in {cfg.out_dir}")
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        ws = Workspace.open(cfg)
        if args.text:
            target = args.text
        else:
            docs = ws.eval.by_id()
            doc_id = args.doc_id if args.doc_id is not None else next(iter(docs), None)
            if doc_id not in docs:
                _err(f"document {doc_id!r} not in {cfg.eval_path}")
                return EXIT_INVALID
            target = docs[doc_id].text
        prompt = build_prompt(ws.schema, ws.exemplars_for_run(args.run), target, cfg.prompt)
    except OSError as exc:
        _err(f"I/O: {exc}")
        return EXIT_IO
    except (ConfigError, SchemaError, PromptError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    sys.stdout.write(prompt.text)
    if not prompt.text.endswith("\n"):
        sys.stdout.write("\n")
    if prompt.dropped_exemplars:
        print(f"note: {prompt.dropped_exemplars} exemplar(s) dropped to fit max_prompt_chars", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        agg = evaluate_files(
            Path(args.schema),
            Path(args.dataset),
            [Path(p) for p in args.predictions],
            Path(args.out_dir),
            Path(args.synonyms) if args.synonyms else None,
            not args.ignore_case,
        )
    except OSError as exc:
        _err(f"I/O: {exc}")
        return EXIT_IO
    except (SchemaError, ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    print((Path(args.out_dir) / "report.txt").read_text(encoding="utf-8"), end="")
    print(f"mean F1 {agg.mean_f1:.4f}")
    return EXIT_OK


def cmd_hardset(args: argparse.Namespace) -> int:
    try:
        schema = load_schema(args.schema)
        ds = load_dataset(args.dataset, schema)
        hard = hard_subset(ds)
        if args.output:
            save_dataset(hard, args.output)
        else:
            for doc in hard.documents:
                print(json.dumps(doc.to_dict(), ensure_ascii=False))
    except OSError as exc:
        _err(f"I/O: {exc}")
        return EXIT_IO
    except SchemaError as exc:
        _err(str(exc))
        return EXIT_INVALID
    if not hard.documents:
        print(f"warning: no overlapping (hard) documents among {len(ds)}", file=sys.stderr)
    else:
        print(f"{len(hard)} of {len(ds)} documents are hard", file=sys.stderr)
    return EXIT_OK


def cmd_restructure(args: argparse.Namespace) -> int:
    try:
        schema = load_schema(args.schema) if args.schema else None
        stats = restructure_stream(args.input, args.out_dir, args.shard_size, args.fallback_entity, schema)
    except OSError as exc:
        _err(f"I/O: {exc}")
        return EXIT_IO
    except (SchemaError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return EXIT_OK


def _add_run_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="JSON run config")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--k-per-relation", type=int)
    p.add_argument("--sample", type=int, help="evaluate on a seeded random subset of this size")
    p.add_argument("--mode", choices=[FEW_SHOT, ZERO_SHOT])
    p.add_argument("--synonyms", help="JSON relation -> synonym map (zero-shot)")
    p.add_argument("--with-rationale", action="store_true")
    p.add_argument("--fixture", help="use a fixture backend with this file instead of the configured one")
    p.add_argument("--max-concurrency", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgcode", description="Code-format prompting for triple extraction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a schema file")
    p.add_argument("schema")
    p.set_defaults(func=lambda a: cmd_validate(a.schema))

    p = sub.add_parser("prompt", help="print the prompt built for one document")
    _add_run_overrides(p)
    p.add_argument("--doc-id")
    p.add_argument("--text", help="build the prompt for this text instead of a dataset document")
    p.add_argument("--run", type=int, default=0, help="repeat index (shifts the exemplar seed)")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="re-score stored prediction files")
    p.add_argument("dataset")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--schema", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--synonyms")
    p.add_argument("--ignore-case", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("hardset", help="extract documents with overlapping triples")
    p.add_argument("dataset")
    p.add_argument("--schema", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_hardset)

    p = sub.add_parser("restructure", help="convert an aligned corpus into code-format shards")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--shard-size", type=int, default=10_000)
    p.add_argument("--fallback-entity", default="Ent")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_restructure)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler()
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, handlers=[console])
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
