"""Leave-one-out ranking metrics, relevance thresholds and plot-data exports.

Metrics take either an ``FMModel`` (with a ``Design``) or any callable
mapping a company index to a score vector over all wells.

Two relevance modes are supported:

* ``threshold`` -- a well is relevant when its model score clears a
  threshold computed from candidate scores (median by default). Precision
  is the share of the top-k above it; recall the share of all relevant
  candidates that made the top-k.
* ``holdout`` -- only the held-out well is relevant.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Design, SplitPair
from .errors import EvaluationError
from .fm import FMModel
from .ranker import score_all_wells, top_k

RELEVANCE_MODES = ("threshold", "holdout")
SCOPES = ("company", "global")


@dataclass(frozen=True)
class ThresholdSpec:
    method: str = "median"
    value: float | None = None

    def __post_init__(self):
        if self.method not in ("median", "fixed", "quantile"):
            raise ValueError(f"unknown threshold method {self.method!r}")
        if self.method != "median" and self.value is None:
            raise ValueError(f"threshold method {self.method!r} needs a value")
        if self.method == "quantile" and not 0.0 <= self.value <= 1.0:
            raise ValueError("quantile must be in [0, 1]")

    @classmethod
    def parse(cls, text: str | ThresholdSpec) -> ThresholdSpec:
        """Parse ``median``, ``fixed:<value>`` or ``quantile:<q>``."""
        if isinstance(text, ThresholdSpec):
            return text
        method, _, value = text.strip().partition(":")
        try:
            return cls(method, float(value) if value else None)
        except ValueError as exc:
            raise ValueError(f"bad threshold spec {text!r}: {exc}") from None

    def __str__(self):
        return self.method if self.value is None else f"{self.method}:{self.value:g}"


def relevance_threshold(scores, method: str | ThresholdSpec = "median") -> float:
    spec = ThresholdSpec.parse(method)
    if spec.method == "fixed":
        return float(spec.value)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EvaluationError("cannot compute a threshold from zero scores")
    if spec.method == "median":
        return float(np.median(scores))
    return float(np.quantile(scores, spec.value))


@dataclass(frozen=True)
class CompanyResult:
    company: int
    holdout_well: int
    rank: int
    hit: bool
    reciprocal_rank: float
    precision: float
    recall: float | None
    n_relevant: int
    threshold: float


@dataclass(frozen=True)
class EvalReport:
    hit_rate: float
    mean_reciprocal_rank: float
    precision_at_k: float
    recall_at_k: float
    k: int
    relevance: str
    threshold_spec: str
    scope: str
    relevance_threshold: float | None
    skipped_recall: int
    per_company: tuple[CompanyResult, ...]

    def metrics(self) -> dict[str, float]:
        return {
            "hit_rate": self.hit_rate,
            "reciprocal_rank": self.mean_reciprocal_rank,
            "precision": self.precision_at_k,
            "recall": self.recall_at_k,
        }

    def format_table(self) -> str:
        names = ("hit rate", "reciprocal rank", f"precision@{self.k}", f"recall@{self.k}")
        lines = [f"{name:<16} {value:.6f}" for name, value in zip(names, self.metrics().values())]
        lines.append(f"{'evaluated':<16} {len(self.per_company)} companies, k={self.k}")
        mode = f"relevance={self.relevance}"
        if self.relevance == "threshold":
            mode += f" threshold={self.threshold_spec} scope={self.scope}"
        lines.append(f"{'mode':<16} {mode}")
        if self.skipped_recall:
            lines.append(f"{'recall skipped':<16} {self.skipped_recall} companies with no relevant wells")
        return "\n".join(lines)


Scorer = Callable[[int], np.ndarray]


def as_scorer(model, design: Design | None = None) -> Scorer:
    if isinstance(model, FMModel):
        if design is None:
            raise ValueError("scoring an FMModel needs a Design")
        return lambda u: score_all_wells(model, u, design)
    if callable(model):
        return lambda u: np.asarray(model(u), dtype=np.float64)
    raise TypeError("model must be an FMModel or a callable company -> scores")


def evaluate(model, split: SplitPair, design: Design | None = None, k: int = 10,
             threshold: str | ThresholdSpec = "median", scope: str = "company",
             relevance: str = "threshold") -> EvalReport:
    """Run every leave-one-out trial and aggregate the four ranking metrics."""
    if not split.holdout:
        raise EvaluationError("holdout is empty; no company has two or more interactions")
    if k < 1:
        raise ValueError("k must be >= 1")
    if relevance not in RELEVANCE_MODES:
        raise ValueError(f"relevance must be one of {RELEVANCE_MODES}")
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    spec = ThresholdSpec.parse(threshold)
    scorer = as_scorer(model, design)
    train = split.train

    trials = []
    for u, h in split.holdout:
        scores = scorer(u)
        mask = np.ones(len(scores), dtype=bool)
        mask[train.observed(u)] = False
        cand = np.flatnonzero(mask)
        cs = scores[cand]
        s_h = scores[h]
        # position of h under the (score desc, index asc) ordering of candidates
        rank = 1 + int(np.sum(cs > s_h)) + int(np.sum((cs == s_h) & (cand < h)))
        trials.append((u, h, scores, cand, rank, top_k(scores, k, train.observed(u))))

    global_thr = None
    if relevance == "threshold" and scope == "global":
        global_thr = relevance_threshold(np.concatenate([t[2][t[3]] for t in trials]), spec)

    rows = []
    for u, h, scores, cand, rank, top in trials:
        hit = rank <= k
        rr = 1.0 / rank if hit else 0.0
        if relevance == "holdout":
            thr = float("nan")
            n_rel = 1
            precision = float(hit) / k
            recall = float(hit)
        else:
            thr = global_thr if global_thr is not None else relevance_threshold(scores[cand], spec)
            n_rel = int(np.sum(scores[cand] >= thr))
            in_top = int(np.sum(scores[top] >= thr))
            precision = in_top / k
            recall = in_top / n_rel if n_rel else None
        rows.append(CompanyResult(u, h, rank, hit, rr, precision, recall, n_rel, thr))

    recalls = [r.recall for r in rows if r.recall is not None]
    if not recalls:
        raise EvaluationError("no evaluated company has any relevant well")
    return EvalReport(
        hit_rate=float(np.mean([r.hit for r in rows])),
        mean_reciprocal_rank=float(np.mean([r.reciprocal_rank for r in rows])),
        precision_at_k=float(np.mean([r.precision for r in rows])),
        recall_at_k=float(np.mean(recalls)),
        k=k,
        relevance=relevance,
        threshold_spec=str(spec),
        scope=scope,
        relevance_threshold=global_thr,
        skipped_recall=len(rows) - len(recalls),
        per_company=tuple(rows),
    )


def hit_rate(model, split: SplitPair, design: Design | None = None, k: int = 10) -> float:
    return evaluate(model, split, design, k, relevance="holdout").hit_rate


def mean_reciprocal_rank(model, split: SplitPair, design: Design | None = None, k: int = 10) -> float:
    return evaluate(model, split, design, k, relevance="holdout").mean_reciprocal_rank


def precision_at_k(model, split: SplitPair, design: Design | None = None, k: int = 10,
                   threshold="median", scope="company", relevance="threshold") -> float:
    return evaluate(model, split, design, k, threshold, scope, relevance).precision_at_k


def recall_at_k(model, split: SplitPair, design: Design | None = None, k: int = 10,
                threshold="median", scope="company", relevance="threshold") -> float:
    return evaluate(model, split, design, k, threshold, scope, relevance).recall_at_k


def baseline_hit_rate(split: SplitPair, k: int = 10) -> float:
    """Hit rate of the popularity ranking on the same split."""
    counts = split.train.well_counts().astype(np.float64)
    return hit_rate(lambda u: counts, split, k=k)


def write_report_csv(report: EvalReport, fh) -> None:
    """Aggregate metrics, in reporting order, as ``metric,value`` rows."""
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["metric", "value"])
    for name, value in report.metrics().items():
        out.writerow([name, repr(value)])
    out.writerow(["k", report.k])
    out.writerow(["relevance", report.relevance])
    out.writerow(["threshold", report.threshold_spec])
    out.writerow(["scope", report.scope])
    out.writerow(["skipped_recall", report.skipped_recall])


def write_per_company_csv(report: EvalReport, company_ids, well_ids, fh) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["operator_id", "holdout_api_number", "rank", "hit", "reciprocal_rank",
                  "precision", "recall", "n_relevant", "threshold"])
    for r in report.per_company:
        out.writerow([company_ids[r.company], well_ids[r.holdout_well], r.rank, int(r.hit),
                      repr(r.reciprocal_rank), repr(r.precision),
                      "" if r.recall is None else repr(r.recall), r.n_relevant, repr(r.threshold)])


@dataclass(frozen=True)
class ThresholdClassification:
    threshold: float
    scores: np.ndarray
    desirable: np.ndarray

    @property
    def counts(self) -> dict[str, int]:
        n = int(self.desirable.sum())
        return {"desirable": n, "undesirable": len(self.scores) - n}


def classify_wells(scores, threshold: float) -> ThresholdClassification:
    """Desirable iff score >= threshold (ties count as desirable)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EvaluationError("no scores to classify")
    return ThresholdClassification(float(threshold), scores, scores >= threshold)


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_curve(scores, labels) -> PRCurve:
    """Precision/recall at every distinct score, sweeping thresholds downward.

    A point at threshold t counts every item with score >= t as predicted
    relevant.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise EvaluationError("precision-recall needs both relevant and non-relevant items")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    tp = np.cumsum(lab)
    # last position of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp_at = tp[ends]
    predicted = ends + 1
    return PRCurve(s[ends], tp_at / n_pos, tp_at / predicted)


def write_pr_curve_csv(curve: PRCurve, fh) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["threshold", "recall", "precision"])
    for t, r, p in zip(curve.thresholds.tolist(), curve.recall.tolist(), curve.precision.tolist()):
        out.writerow([repr(t), repr(r), repr(p)])


@dataclass(frozen=True)
class SeparationTable:
    edges: np.ndarray
    desirable: np.ndarray
    undesirable: np.ndarray

    def rows(self):
        for n in range(len(self.desirable)):
            yield float(self.edges[n]), float(self.edges[n + 1]), int(self.desirable[n]), int(self.undesirable[n])


def class_separation_export(classification: ThresholdClassification, bins: int = 20) -> SeparationTable:
    """Per-class counts over equal-width score bins spanning [min, max]."""
    scores = classification.scores
    if scores.size == 0:
        raise EvaluationError("no scores to bin")
    edges = np.histogram_bin_edges(scores, bins=bins)
    good, _ = np.histogram(scores[classification.desirable], bins=edges)
    bad, _ = np.histogram(scores[~classification.desirable], bins=edges)
    return SeparationTable(edges, good, bad)


def write_separation_csv(table: SeparationTable, fh) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["bin_lo", "bin_hi", "desirable_count", "undesirable_count"])
    for lo, hi, good, bad in table.rows():
        out.writerow([repr(lo), repr(hi), good, bad])
