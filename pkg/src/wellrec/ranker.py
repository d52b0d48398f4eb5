"""Top-k well recommendation per company."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Design, InteractionSet
from .fm import FMModel


@dataclass(frozen=True)
class RankedList:
    company: int
    wells: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.wells)

    def __iter__(self):
        return zip(self.wells.tolist(), self.scores.tolist())


def score_all_wells(model: FMModel, u: int, design: Design) -> np.ndarray:
    if model.n != design.n_features:
        raise IndexError(f"model has {model.n} features, design needs {design.n_features}")
    if not 0 <= u < design.n_companies:
        raise IndexError(f"company index {u} out of range")
    return kernels.score_wells(model.w0, model.w, model.V, design.n_companies, design.aux, u)


def top_k(scores: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Indices of the k best scores; ties go to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = np.arange(len(scores))
    if exclude is not None and len(exclude):
        mask = np.ones(len(scores), dtype=bool)
        mask[np.asarray(exclude, dtype=np.int64)] = False
        candidates = candidates[mask]
    # lexsort: last key is primary
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


def recommend_top_k(model: FMModel, u: int, k: int, design: Design,
                    train: InteractionSet | None = None, exclude_observed: bool = True) -> RankedList:
    scores = score_all_wells(model, u, design)
    exclude = train.observed(u) if (exclude_observed and train is not None) else None
    wells = top_k(scores, k, exclude)
    return RankedList(u, wells, scores[wells])


def recommend_all(model: FMModel, k: int, design: Design, train: InteractionSet | None = None,
                  exclude_observed: bool = True, companies=None) -> list[RankedList]:
    companies = range(design.n_companies) if companies is None else companies
    return [recommend_top_k(model, u, k, design, train, exclude_observed) for u in companies]


def popularity_baseline(train: InteractionSet, u: int, k: int) -> RankedList:
    """Wells by training interaction count, excluding those ``u`` already owns."""
    counts = train.well_counts().astype(np.float64)
    wells = top_k(counts, k, train.observed(u))
    return RankedList(u, wells, counts[wells])


def recommendation_frequency(lists) -> Counter:
    """How many companies each well was recommended to."""
    freq = Counter()
    for ranked in lists:
        freq.update(ranked.wells.tolist())
    return freq


def write_recommendations(lists, interactions: InteractionSet, fh) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["operator_id", "rank", "api_number", "score"])
    for ranked in lists:
        for rank, (well, s) in enumerate(ranked, start=1):
            out.writerow([interactions.company_ids[ranked.company], rank,
                          interactions.well_ids[well], repr(float(s))])
