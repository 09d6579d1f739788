"""Strict micro-F1 scoring, multi-run aggregation and report rendering."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .core import RelationTriple, normalize_surface
from .datasets import Dataset


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: MatchCounts) -> MatchCounts:
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    counts: MatchCounts

    def to_dict(self) -> dict[str, Any]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "counts": self.counts.to_dict()}


@dataclass(frozen=True)
class RunReport:
    per_doc: Mapping[str, MatchCounts]
    overall: Metrics
    hard_overall: Metrics | None = None
    n_docs: int = 0
    diagnostics_total: int = 0
    failed_requests: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_docs": self.n_docs,
            "overall": self.overall.to_dict(),
            "hard_overall": self.hard_overall.to_dict() if self.hard_overall else None,
            "diagnostics_total": self.diagnostics_total,
            "failed_requests": self.failed_requests,
            "per_doc": {k: self.per_doc[k].to_dict() for k in sorted(self.per_doc)},
        }


@dataclass(frozen=True)
class AggregateReport:
    runs: tuple[RunReport, ...]
    mean_f1: float
    mean_precision: float
    mean_recall: float
    stdev_f1: float
    mean_hard_f1: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_runs": len(self.runs),
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "mean_f1": self.mean_f1,
            "stdev_f1": self.stdev_f1,
            "mean_hard_f1": self.mean_hard_f1,
            "runs": [r.to_dict() for r in self.runs],
        }


@dataclass(frozen=True)
class MatchPolicy:
    """How surfaces are compared. ``relation_map`` rewrites relation surfaces
    (e.g. synonyms back to canonical names) on both sides before matching."""

    case_sensitive: bool = True
    relation_map: Mapping[str, str] = field(default_factory=dict)

    def key(self, t: RelationTriple) -> tuple[str, str, str]:
        rel = normalize_surface(t.relation)
        rel = self.relation_map.get(rel, rel)
        return (
            normalize_surface(t.head.text, self.case_sensitive),
            normalize_surface(rel, self.case_sensitive),
            normalize_surface(t.tail.text, self.case_sensitive),
        )


STRICT = MatchPolicy()


def match_document(
    gold: Iterable[RelationTriple], pred: Iterable[RelationTriple], policy: MatchPolicy = STRICT
) -> MatchCounts:
    """Set-based exact match on (head text, relation, tail text); entity types are ignored."""
    g = {policy.key(t) for t in gold}
    p = {policy.key(t) for t in pred}
    tp = len(g & p)
    return MatchCounts(tp, len(p) - tp, len(g) - tp)


def micro_metrics(counts: MatchCounts) -> Metrics:
    p_den = counts.tp + counts.fp
    r_den = counts.tp + counts.fn
    precision = counts.tp / p_den if p_den else 0.0
    recall = counts.tp / r_den if r_den else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, f1, counts)


def _sum_counts(counts: Iterable[MatchCounts]) -> MatchCounts:
    total = MatchCounts()
    for c in counts:
        total = total + c
    return total


def score_run(
    ds: Dataset,
    preds: Mapping[str, Sequence[RelationTriple]],
    hard_ids: Iterable[str] | None = None,
    policy: MatchPolicy = STRICT,
    diagnostics_total: int = 0,
    failed_requests: int = 0,
) -> RunReport:
    """Score one run. Documents without predictions count as empty predictions."""
    known = set(ds.ids())
    extras = sorted(set(preds) - known)
    if extras:
        raise ValueError(f"predictions for unknown document ids: {', '.join(extras)}")
    per_doc = {d.id: match_document(d.gold, preds.get(d.id, ()), policy) for d in ds.documents}
    overall = micro_metrics(_sum_counts(per_doc.values()))
    hard = None
    if hard_ids is not None:
        hard_set = set(hard_ids)
        hard = micro_metrics(_sum_counts(c for k, c in per_doc.items() if k in hard_set))
    return RunReport(per_doc, overall, hard, len(ds.documents), diagnostics_total, failed_requests)


def aggregate_runs(reports: Sequence[RunReport]) -> AggregateReport:
    if not reports:
        raise ValueError("need at least one run to aggregate")
    ids = set(reports[0].per_doc)
    for i, r in enumerate(reports[1:], 1):
        if set(r.per_doc) != ids:
            raise ValueError(f"run {i} covers a different document set than run 0")
    f1s = [r.overall.f1 for r in reports]
    hard = [r.hard_overall.f1 for r in reports if r.hard_overall is not None]
    return AggregateReport(
        runs=tuple(reports),
        mean_f1=statistics.fmean(f1s),
        mean_precision=statistics.fmean(r.overall.precision for r in reports),
        mean_recall=statistics.fmean(r.overall.recall for r in reports),
        stdev_f1=statistics.stdev(f1s) if len(f1s) > 1 else 0.0,
        mean_hard_f1=statistics.fmean(hard) if len(hard) == len(reports) else None,
    )


def dumps_report(report: RunReport | AggregateReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


TABLE_HEADER = ("dataset", "n_docs", "P", "R", "F1", "hard-F1")


def format_table(rows: Sequence[tuple[str, RunReport | AggregateReport]]) -> str:
    """Fixed-width plain-text table, one row per (dataset name, report)."""
    body = []
    for name, rep in rows:
        if isinstance(rep, AggregateReport):
            n_docs = rep.runs[0].n_docs
            p, r, f, h = rep.mean_precision, rep.mean_recall, rep.mean_f1, rep.mean_hard_f1
        else:
            n_docs = rep.n_docs
            p, r, f = rep.overall.precision, rep.overall.recall, rep.overall.f1
            h = rep.hard_overall.f1 if rep.hard_overall else None
        hard = f"{h:.4f}" if h is not None else "-"
        body.append((name, str(n_docs), f"{p:.4f}", f"{r:.4f}", f"{f:.4f}", hard))
    widths = [max(len(row[i]) for row in [TABLE_HEADER, *body]) for i in range(len(TABLE_HEADER))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [TABLE_HEADER, *body]]
    return "\n".join(lines) + "\n"
