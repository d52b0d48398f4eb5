"""Planted-structure interaction data for recovery tests and benchmarks."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import FEATURE_COLUMNS, InteractionSet, WellFeatureTable


def planted_clusters(n_companies=50, n_wells=200, n_clusters=2, per_company=20,
                     core_size=25, attributes="constant", seed=0):
    """Companies split into clusters, each owning wells from its cluster's core.

    Cores are disjoint random sets of ``core_size`` wells. Within a cluster,
    company r skips the cyclic window of ``core_size - per_company`` core
    wells starting at position r plus a random offset, so when the cluster size is a
    multiple of ``core_size`` every core well is owned equally often and
    popularity says nothing about preference.

    ``attributes`` is ``"constant"`` (attribute columns carry no signal and
    standardize to zero) or ``"noise"`` (independent random values).
    Returns (InteractionSet, raw WellFeatureTable, cluster label per company).
    """
    if n_clusters * core_size > n_wells:
        raise ValueError("cores do not fit in the catalog")
    if not 1 <= per_company <= core_size:
        raise ValueError("per_company must be in [1, core_size]")
    if attributes not in ("constant", "noise"):
        raise ValueError("attributes must be 'constant' or 'noise'")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_wells)
    cores = [perm[c * core_size:(c + 1) * core_size] for c in range(n_clusters)]
    labels = np.arange(n_companies) % n_clusters
    skip = core_size - per_company
    offset = rng.integers(core_size, size=n_clusters)

    pairs = set()
    for u in range(n_companies):
        c = labels[u]
        r = u // n_clusters
        start = (offset[c] + r) % core_size
        skipped = {(start + m) % core_size for m in range(skip)}
        pairs.update((u, int(cores[c][m])) for m in range(core_size) if m not in skipped)

    company_ids = tuple(f"{9000 + u}" for u in range(n_companies))
    well_ids = tuple(f"31-{101 + i // 1000:03d}-{10000 + i % 1000 * 7:05d}-00-00" for i in range(n_wells))
    if attributes == "noise":
        features = np.column_stack([
            rng.lognormal(8.0, 1.0, n_wells),      # production
            rng.normal(400.0, 120.0, n_wells),     # elevation
            rng.integers(30, 9000, n_wells),       # ownership duration, days
        ]).astype(np.float64)
    else:
        features = np.tile([5000.0, 400.0, 365.0], (n_wells, 1))
    interactions = InteractionSet(company_ids, well_ids, frozenset(pairs))
    return interactions, WellFeatureTable(features, FEATURE_COLUMNS), labels


def write_csv(interactions: InteractionSet, table: WellFeatureTable, directory) -> tuple[Path, Path]:
    """Write the interactions.csv / wells.csv pair understood by the loaders."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ipath, wpath = directory / "interactions.csv", directory / "wells.csv"
    with ipath.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["operator_id", "api_number"])
        for u, i in sorted(interactions.pairs):
            out.writerow([interactions.company_ids[u], interactions.well_ids[i]])
    with wpath.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["api_number", *table.columns])
        for well, row in zip(interactions.well_ids, table.values):
            out.writerow([well, *(repr(float(x)) for x in row)])
    return ipath, wpath
