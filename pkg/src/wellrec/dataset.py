"""Ingestion of company/well interaction data and the FM design layout.

Feature layout for a (company, well) row, with C companies, I wells and A
auxiliary columns::

    [0, C)          one-hot company indicator
    [C, C+I)        one-hot well indicator
    [C+I, C+I+A)    standardized well attributes (production, elevation, duration)
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import CoverageError, DataError, EmptyDatasetError, ParseError, SchemaError

COMPANY_COLUMN = "operator_id"
WELL_COLUMN = "api_number"
FEATURE_COLUMNS = ("production", "elevation", "duration_days")


@dataclass(frozen=True)
class InteractionSet:
    """Observed (company, well) pairs plus the external id of every index."""

    company_ids: tuple[str, ...]
    well_ids: tuple[str, ...]
    pairs: frozenset[tuple[int, int]]
    duplicates: int = 0

    def __post_init__(self):
        object.__setattr__(self, "company_ids", tuple(self.company_ids))
        object.__setattr__(self, "well_ids", tuple(self.well_ids))
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        if len(set(self.company_ids)) != len(self.company_ids):
            raise DataError("duplicate company id")
        if len(set(self.well_ids)) != len(self.well_ids):
            raise DataError("duplicate well id")
        C, I = len(self.company_ids), len(self.well_ids)
        for u, i in self.pairs:
            if not (0 <= u < C and 0 <= i < I):
                raise DataError(f"pair ({u}, {i}) out of range for {C} companies, {I} wells")

    @property
    def n_companies(self) -> int:
        return len(self.company_ids)

    @property
    def n_wells(self) -> int:
        return len(self.well_ids)

    def __len__(self):
        return len(self.pairs)

    @cached_property
    def company_index(self) -> dict[str, int]:
        return {c: n for n, c in enumerate(self.company_ids)}

    @cached_property
    def well_index(self) -> dict[str, int]:
        return {w: n for n, w in enumerate(self.well_ids)}

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) with each company's wells sorted ascending."""
        ordered = sorted(self.pairs)
        indices = np.array([i for _, i in ordered], dtype=np.int64)
        counts = np.bincount(np.array([u for u, _ in ordered], dtype=np.int64),
                             minlength=self.n_companies)
        indptr = np.zeros(self.n_companies + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, indices

    def observed(self, u: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[u]:indptr[u + 1]]

    def degree(self) -> np.ndarray:
        indptr, _ = self.csr
        return np.diff(indptr)

    def well_counts(self) -> np.ndarray:
        _, indices = self.csr
        return np.bincount(indices, minlength=self.n_wells)

    def with_pairs(self, pairs) -> InteractionSet:
        """Same id catalog, different pair set."""
        return InteractionSet(self.company_ids, self.well_ids, frozenset(pairs))


@dataclass(frozen=True)
class WellFeatureTable:
    """Per-well auxiliary attributes, one row per well index.

    ``mean``/``std`` are the scaler that produced ``values`` when
    ``standardized`` is set; a zero ``std`` marks a constant column.
    """

    values: np.ndarray
    columns: tuple[str, ...] = FEATURE_COLUMNS
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise DataError(f"feature table shape {values.shape} does not match columns {self.columns}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def standardized(self) -> bool:
        return self.mean is not None

    @property
    def n_wells(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path.open(newline="", encoding="utf-8")


def _require(header, columns, path):
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")


def load_interactions(path) -> InteractionSet:
    """Read ``operator_id,api_number`` pairs; indices follow first appearance."""
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        _require(header, (COMPANY_COLUMN, WELL_COLUMN), path)
        ci, wi = header.index(COMPANY_COLUMN), header.index(WELL_COLUMN)

        companies: dict[str, int] = {}
        wells: dict[str, int] = {}
        pairs: set[tuple[int, int]] = set()
        duplicates = 0
        rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(ci, wi):
                raise ParseError("too few fields", lineno)
            company, well = row[ci].strip(), row[wi].strip()
            if not company or not well:
                raise ParseError("empty operator or API number", lineno)
            rows += 1
            pair = (companies.setdefault(company, len(companies)),
                    wells.setdefault(well, len(wells)))
            if pair in pairs:
                duplicates += 1
            pairs.add(pair)

    if rows == 0:
        raise EmptyDatasetError(f"{path}: no interaction rows")
    if duplicates:
        warnings.warn(f"{path}: collapsed {duplicates} duplicate interaction(s)", stacklevel=2)
    return InteractionSet(tuple(companies), tuple(wells), frozenset(pairs), duplicates)


def load_well_features(path, interactions: InteractionSet,
                       extra_columns: tuple[str, ...] = ()) -> WellFeatureTable:
    """Raw (unscaled) attribute table aligned to ``interactions.well_ids``.

    ``extra_columns`` appends further numeric columns after the three
    standard ones. Rows for wells absent from ``interactions`` are ignored.
    """
    columns = FEATURE_COLUMNS + tuple(extra_columns)
    rows: dict[str, list[float]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        _require(header, (WELL_COLUMN,) + columns, path)
        wi = header.index(WELL_COLUMN)
        cols = [header.index(c) for c in columns]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ParseError("too few fields", lineno)
            well = row[wi].strip()
            if well in rows:
                raise ParseError(f"duplicate row for well {well}", lineno)
            try:
                rows[well] = [float(row[c]) for c in cols]
            except ValueError:
                bad = next(row[c] for c in cols if not _is_float(row[c]))
                raise ParseError(f"non-numeric value {bad!r}", lineno) from None

    missing = [w for w in interactions.well_ids if w not in rows]
    if missing:
        raise CoverageError(missing)
    values = np.array([rows[w] for w in interactions.well_ids], dtype=np.float64)
    return WellFeatureTable(values.reshape(len(interactions.well_ids), len(columns)), columns)


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def standardize(table: WellFeatureTable) -> WellFeatureTable:
    """Z-score each column with the sample standard deviation.

    Constant columns (and single-row tables) become all zeros.
    """
    if table.n_wells == 0:
        raise DataError("cannot standardize an empty feature table")
    raw = table.values
    mean = raw.mean(axis=0)
    if table.n_wells > 1:
        std = raw.std(axis=0, ddof=1)
    else:
        std = np.zeros(table.n_features)
    # exact test: a constant column's float std can come out as rounding noise
    std = np.where(np.ptp(raw, axis=0) > 0, std, 0.0)
    return WellFeatureTable(apply_scaler(raw, mean, std), table.columns, mean, std)


def apply_scaler(raw, mean, std) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (raw - mean) / safe, 0.0)


def unscale(table: WellFeatureTable) -> np.ndarray:
    """Invert ``standardize``: raw = value * std + mean."""
    if not table.standardized:
        return table.values.copy()
    return table.values * table.std + table.mean


@dataclass(frozen=True)
class EncodedRow:
    indices: np.ndarray
    values: np.ndarray
    n: int

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.indices] = self.values
        return x


@dataclass(frozen=True)
class Design:
    """Everything needed to turn (company, well) into an FM feature vector."""

    n_companies: int
    aux: np.ndarray
    columns: tuple[str, ...] = field(default=FEATURE_COLUMNS)

    def __post_init__(self):
        aux = np.ascontiguousarray(self.aux, dtype=np.float64)
        if aux.ndim != 2:
            raise DataError("aux must be a (wells x features) matrix")
        aux.setflags(write=False)
        object.__setattr__(self, "aux", aux)

    @property
    def n_wells(self) -> int:
        return self.aux.shape[0]

    @property
    def n_aux(self) -> int:
        return self.aux.shape[1]

    @property
    def n_features(self) -> int:
        return self.n_companies + self.n_wells + self.n_aux


def build_design(interactions: InteractionSet, table: WellFeatureTable) -> Design:
    """Standardizes ``table`` if it is still raw."""
    if table.n_wells != interactions.n_wells:
        raise DataError(f"feature table has {table.n_wells} rows, catalog has {interactions.n_wells} wells")
    if not table.standardized:
        table = standardize(table)
    return Design(interactions.n_companies, table.values, table.columns)


def encode_row(u: int, i: int, design: Design) -> EncodedRow:
    C, I = design.n_companies, design.n_wells
    if not 0 <= u < C:
        raise IndexError(f"company index {u} out of range [0, {C})")
    if not 0 <= i < I:
        raise IndexError(f"well index {i} out of range [0, {I})")
    aux = design.aux[i]
    nz = np.flatnonzero(aux)
    indices = np.concatenate(([u, C + i], C + I + nz)).astype(np.int64)
    values = np.concatenate(([1.0, 1.0], aux[nz]))
    return EncodedRow(indices, values, design.n_features)


@dataclass(frozen=True)
class SplitPair:
    train: InteractionSet
    holdout: tuple[tuple[int, int], ...]


def split_leave_one_out(interactions: InteractionSet, seed) -> SplitPair:
    """Hold out one uniformly chosen well per company that owns two or more."""
    rng = np.random.default_rng(seed)
    holdout = []
    for u in range(interactions.n_companies):
        owned = interactions.observed(u)
        if len(owned) < 2:
            continue
        holdout.append((u, int(owned[rng.integers(len(owned))])))
    train = interactions.with_pairs(interactions.pairs.difference(holdout))
    return SplitPair(train, tuple(holdout))
