"""End-to-end experiment runs: prompt, complete, parse, score, write artifacts."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .codeparse import apply_stop_sequences, dedupe_triples, parse_completion
from .core import RelationTriple, Schema, load_schema, normalize_surface, validate_schema
from .datasets import Dataset, ExemplarSet, hard_subset, load_dataset, sample_subset, select_exemplars
from .evalkit import AggregateReport, MatchPolicy, RunReport, aggregate_runs, dumps_report, format_table, score_run
from .llm import (
    BackendConfig,
    CompletionRequest,
    CompletionResponse,
    FinishReason,
    GenerationParams,
    complete_batch,
    make_backend,
)
from .promptgen import Prompt, PromptOptions, build_prompt, completion_prefix, substitute_synonyms

logger = logging.getLogger(__name__)

FEW_SHOT = "few-shot"
ZERO_SHOT = "zero-shot"

PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
AGGREGATE_FILE = "aggregate.json"
TABLE_FILE = "report.txt"
CONFIG_SNAPSHOT = "config.json"
LOG_FILE = "run.log"


class ConfigError(ValueError):
    pass


class BackendFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    schema_path: Path
    train_path: Path
    eval_path: Path
    out_dir: Path
    backend: BackendConfig
    gen: GenerationParams = GenerationParams()
    prompt: PromptOptions = PromptOptions()
    k_per_relation: int = 3
    repeats: int = 3
    seed: int = 0
    mode: str = FEW_SHOT
    synonym_map_path: Path | None = None
    sample: int | None = None
    case_sensitive: bool = True

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.k_per_relation < 0:
            raise ConfigError("k_per_relation must be >= 0")
        if self.mode not in (FEW_SHOT, ZERO_SHOT):
            raise ConfigError(f"mode must be {FEW_SHOT!r} or {ZERO_SHOT!r}, got {self.mode!r}")
        if self.mode == ZERO_SHOT and self.synonym_map_path is None:
            raise ConfigError("zero-shot mode needs a synonym map")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path = Path(".")) -> RunConfig:
        def path(v: Any) -> Path | None:
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else (base_dir / p)

        try:
            ds = data.get("data", {})
            run = data.get("run", {})
            prompt = PromptOptions.from_dict(data.get("prompt", {}))
            return cls(
                schema_path=path(data["schema"]),  # type: ignore[arg-type]
                train_path=path(ds["train"]),  # type: ignore[arg-type]
                eval_path=path(ds["eval"]),  # type: ignore[arg-type]
                out_dir=path(run.get("out_dir", "out")),  # type: ignore[arg-type]
                backend=BackendConfig.from_dict(data.get("backend", {}), base_dir),
                gen=GenerationParams.from_dict(data.get("gen", {}), prompt.with_rationale),
                prompt=prompt,
                k_per_relation=int(run.get("k_per_relation", 3)),
                repeats=int(run.get("repeats", 3)),
                seed=int(run.get("seed", 0)),
                mode=str(run.get("mode", FEW_SHOT)),
                synonym_map_path=path(ds.get("synonyms")),
                sample=ds.get("sample"),
                case_sensitive=bool(run.get("case_sensitive", True)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"incomplete config: missing or bad {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": str(self.schema_path),
            "data": {
                "train": str(self.train_path),
                "eval": str(self.eval_path),
                "synonyms": str(self.synonym_map_path) if self.synonym_map_path else None,
                "sample": self.sample,
            },
            "backend": self.backend.to_dict(),
            "gen": self.gen.to_dict(),
            "prompt": self.prompt.to_dict(),
            "run": {
                "k_per_relation": self.k_per_relation,
                "repeats": self.repeats,
                "seed": self.seed,
                "mode": self.mode,
                "out_dir": str(self.out_dir),
                "case_sensitive": self.case_sensitive,
            },
        }


def load_synonyms(path: Path) -> dict[str, str]:
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise ConfigError(f"{path}: synonym map must be a JSON object of strings")
    return {normalize_surface(k): normalize_surface(v) for k, v in data.items()}


def match_policy(case_sensitive: bool, synonyms: Mapping[str, str] | None) -> MatchPolicy:
    # predictions made from synonym exemplars are mapped back to the canonical surface
    inverse = {v: k for k, v in (synonyms or {}).items()}
    return MatchPolicy(case_sensitive, inverse)


@dataclass
class Workspace:
    """Everything a run needs, loaded once."""

    cfg: RunConfig
    schema: Schema
    train: Dataset
    eval: Dataset
    synonyms: dict[str, str] | None = None
    hard_ids: list[str] = field(default_factory=list)

    @classmethod
    def open(cls, cfg: RunConfig) -> Workspace:
        schema = load_schema(cfg.schema_path)
        report = validate_schema(schema)
        if not report.ok:
            raise ConfigError(f"schema {cfg.schema_path} is invalid:\n{report}")
        train = load_dataset(cfg.train_path, schema)
        ev = load_dataset(cfg.eval_path, schema)
        if cfg.sample is not None:
            ev = sample_subset(ev, int(cfg.sample), cfg.seed)
        synonyms = load_synonyms(cfg.synonym_map_path) if cfg.synonym_map_path else None
        return cls(cfg, schema, train, ev, synonyms, hard_subset(ev).ids())

    @property
    def dataset_name(self) -> str:
        return self.cfg.eval_path.stem

    def policy(self) -> MatchPolicy:
        syn = self.synonyms if self.cfg.mode == ZERO_SHOT else None
        return match_policy(self.cfg.case_sensitive, syn)

    def exemplars_for_run(self, r: int) -> ExemplarSet:
        cfg = self.cfg
        # zero-shot: one exemplar per relation, relations renamed to synonyms
        k = 1 if cfg.mode == ZERO_SHOT else cfg.k_per_relation
        exemplars = select_exemplars(self.train, self.schema, k, cfg.seed + r)
        if cfg.mode == ZERO_SHOT:
            exemplars = substitute_synonyms(exemplars, self.synonyms or {})
        return exemplars

    def prompts_for_run(self, r: int) -> list[Prompt]:
        exemplars = self.exemplars_for_run(r)
        return [build_prompt(self.schema, exemplars, doc.text, self.cfg.prompt) for doc in self.eval.documents]


def _params_for_run(gen: GenerationParams, r: int) -> GenerationParams:
    return gen if gen.seed is None else replace(gen, seed=gen.seed + r)


def prediction_record(
    doc_id: str, resp: CompletionResponse, stops: Sequence[str], schema: Schema, prefix: str = ""
) -> dict[str, Any]:
    text = apply_stop_sequences(resp.text, stops)
    parsed = parse_completion(prefix + text, schema)
    triples = dedupe_triples(parsed.triples)
    return {
        "id": doc_id,
        "finish_reason": resp.finish_reason.value,
        "error": resp.error,
        "completion": text,
        "triples": [t.to_dict() for t in triples],
        "diagnostics": [d.to_dict() for d in parsed.diagnostics],
    }


def write_jsonl(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_predictions(path: Path) -> tuple[dict[str, list[RelationTriple]], int, int]:
    """Return (triples by doc id, diagnostics total, failed request count)."""
    preds: dict[str, list[RelationTriple]] = {}
    n_diag = n_failed = 0
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                triples = [RelationTriple.from_dict(t).normalized() for t in row.get("triples", [])]
                doc_id = str(row["id"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
            preds[doc_id] = triples
            n_diag += len(row.get("diagnostics", []))
            n_failed += row.get("finish_reason") == FinishReason.ERROR.value
    return preds, n_diag, n_failed


def score_prediction_files(
    ds: Dataset, files: Sequence[Path], hard_ids: Sequence[str], policy: MatchPolicy
) -> tuple[list[RunReport], AggregateReport]:
    reports = []
    for path in files:
        preds, n_diag, n_failed = read_predictions(path)
        reports.append(score_run(ds, preds, hard_ids, policy, n_diag, n_failed))
    return reports, aggregate_runs(reports)


def write_reports(
    out_dir: Path, dataset_name: str, run_dirs: Sequence[Path], reports: Sequence[RunReport], agg: AggregateReport
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, RunReport | AggregateReport]] = []
    for run_dir, rep in zip(run_dirs, reports):
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / REPORT_FILE).write_text(dumps_report(rep), encoding="utf-8")
        rows.append((f"{dataset_name}/{run_dir.name}", rep))
    rows.append((f"{dataset_name}/mean", agg))
    (out_dir / AGGREGATE_FILE).write_text(dumps_report(agg), encoding="utf-8")
    table = format_table(rows) + f"stdev_f1 {agg.stdev_f1:.4f}\n"
    (out_dir / TABLE_FILE).write_text(table, encoding="utf-8")


def run_dir_name(r: int) -> str:
    return f"run-{r}"


def run_experiment(cfg: RunConfig) -> AggregateReport:
    """Execute every repeat and write all artifacts under ``cfg.out_dir``.

    Raises BackendFailure (after writing predictions) when every request of
    a run failed.
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    log_handler = logging.FileHandler(out / LOG_FILE, mode="w", encoding="utf-8")
    log_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    pkg_logger = logging.getLogger("kgcode")
    pkg_logger.addHandler(log_handler)
    prev_level = pkg_logger.level
    pkg_logger.setLevel(logging.INFO)
    try:
        (out / CONFIG_SNAPSHOT).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        ws = Workspace.open(cfg)
        backend = make_backend(cfg.backend)
        run_dirs, files = [], []
        for r in range(cfg.repeats):
            run_dir = out / run_dir_name(r)
            run_dir.mkdir(parents=True, exist_ok=True)
            prompts = ws.prompts_for_run(r)
            params = _params_for_run(cfg.gen, r)
            reqs = [CompletionRequest(p.text, params, doc.id) for p, doc in zip(prompts, ws.eval.documents)]
            meta = {
                "exemplar_ids": list(prompts[0].exemplar_ids) if prompts else [],
                "dropped_exemplars": max((p.dropped_exemplars for p in prompts), default=0),
                "seed": cfg.seed + r,
            }
            (run_dir / "prompt_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            responses = complete_batch(reqs, backend, cfg.backend.max_concurrency)
            for req, resp in zip(reqs, responses):
                logger.info("run %d %s: %s in %d ms via %s", r, req.tag, resp.finish_reason.value, resp.latency_ms, resp.backend_id)
            prefix = completion_prefix(cfg.prompt)
            records = [
                prediction_record(d.id, resp, params.stop, ws.schema, prefix)
                for d, resp in zip(ws.eval.documents, responses)
            ]
            write_jsonl(run_dir / PREDICTIONS_FILE, records)
            failed = sum(not resp.ok for resp in responses)
            if responses and failed == len(responses):
                raise BackendFailure(f"run {r}: all {failed} requests failed; first error: {responses[0].error}")
            run_dirs.append(run_dir)
            files.append(run_dir / PREDICTIONS_FILE)
        reports, agg = score_prediction_files(ws.eval, files, ws.hard_ids, ws.policy())
        write_reports(out, ws.dataset_name, run_dirs, reports, agg)
        return agg
    finally:
        pkg_logger.removeHandler(log_handler)
        pkg_logger.setLevel(prev_level)
        log_handler.close()


def evaluate_files(
    schema_path: Path,
    dataset_path: Path,
    prediction_files: Sequence[Path],
    out_dir: Path,
    synonyms_path: Path | None = None,
    case_sensitive: bool = True,
) -> AggregateReport:
    """Re-score stored prediction files; writes the same reports as a run."""
    schema = load_schema(schema_path)
    ds = load_dataset(dataset_path, schema)
    synonyms = load_synonyms(synonyms_path) if synonyms_path else None
    files = list(prediction_files)
    reports, agg = score_prediction_files(ds, files, hard_subset(ds).ids(), match_policy(case_sensitive, synonyms))
    # run directories are named after the prediction file's parent when it follows the run-N layout
    run_dirs = [
        out_dir / (f.parent.name if f.parent.name.startswith("run-") else run_dir_name(i))
        for i, f in enumerate(files)
    ]
    write_reports(out_dir, dataset_path.stem, run_dirs, reports, agg)
    return agg
