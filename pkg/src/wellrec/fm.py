"""Second-order factorization machine: parameters, scoring, persistence.

Model file layout (all integers/floats little-endian)::

    4 bytes   magic  b"WRFM"
    uint32    format version
    uint32    n (feature count)
    uint32    k (factor count)
    uint32    L, length of the metadata block
    L bytes   UTF-8 JSON metadata (TrainConfig under "config", plus caller extras)
    float64   w0
    n float64 w
    n*k float64  V, row-major
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import Design, EncodedRow
from .errors import ConfigError, DegeneratePairError, ModelFormatError, ModelVersionError

LOSSES = ("bpr", "warp")
SCHEDULES = ("constant", "invscaling")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``regularization`` is the L2 weight (``alpha`` on the command line) and
    ``init_sigma`` the standard deviation of the latent factor initialisation.
    """

    factors: int = 20
    loss: str = "warp"
    epochs: int = 30
    learning_rate: float = 0.1
    schedule: str = "invscaling"
    schedule_exponent: float = 0.25
    regularization: float = 0.1
    max_samples: int = 20
    init_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        checks = [
            (isinstance(self.factors, int) and self.factors >= 1, "factors must be an integer >= 1"),
            (self.loss in LOSSES, f"loss must be one of {LOSSES}"),
            (isinstance(self.epochs, int) and self.epochs >= 0, "epochs must be an integer >= 0"),
            (_finite(self.learning_rate) and self.learning_rate > 0, "learning_rate must be > 0"),
            (self.schedule in SCHEDULES, f"schedule must be one of {SCHEDULES}"),
            (_finite(self.schedule_exponent) and self.schedule_exponent >= 0,
             "schedule_exponent must be >= 0"),
            (_finite(self.regularization) and self.regularization >= 0, "regularization must be >= 0"),
            (isinstance(self.max_samples, int) and self.max_samples >= 1, "max_samples must be an integer >= 1"),
            (_finite(self.init_sigma) and self.init_sigma > 0, "init_sigma must be > 0"),
            (isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @classmethod
    def from_dict(cls, values: dict) -> TrainConfig:
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def _finite(x):
    return isinstance(x, (int, float)) and math.isfinite(x)


@dataclass
class FMModel:
    w0: float
    w: np.ndarray
    V: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w0 = float(self.w0)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.V.ndim != 2 or self.w.shape != (self.V.shape[0],):
            raise ValueError(f"inconsistent shapes w{self.w.shape} V{self.V.shape}")
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be >= 1")

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.V.shape[1]

    def copy(self) -> FMModel:
        return FMModel(self.w0, self.w.copy(), self.V.copy(), self.config, dict(self.meta))

    def is_finite(self) -> bool:
        return math.isfinite(self.w0) and bool(np.isfinite(self.w).all() and np.isfinite(self.V).all())

    def squared_norm(self) -> float:
        return self.w0 * self.w0 + float(self.w @ self.w) + float(np.sum(self.V * self.V))


def init_model(n: int, config: TrainConfig, rng: np.random.Generator | None = None) -> FMModel:
    """Zero biases, latent factors drawn from N(0, init_sigma^2).

    Without an explicit ``rng`` the generator is seeded from ``config.seed``.
    """
    if not isinstance(config, TrainConfig):
        raise ConfigError("config must be a TrainConfig")
    if n < 1:
        raise ConfigError("feature count n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    V = rng.normal(0.0, config.init_sigma, size=(n, config.factors))
    return FMModel(0.0, np.zeros(n), V, config)


def score(model: FMModel, x: EncodedRow) -> float:
    """w0 + <w, x> + sum_{i<j} <v_i, v_j> x_i x_j via the O(k * nnz) identity."""
    idx = np.asarray(x.indices, dtype=np.int64)
    val = np.asarray(x.values, dtype=np.float64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.n):
        raise IndexError(f"feature index out of range for model with n={model.n}")
    if idx.size == 0:
        return model.w0
    Vx = model.V[idx] * val[:, None]
    s = Vx.sum(axis=0)
    pairwise = 0.5 * float(np.sum(s * s - np.sum(Vx * Vx, axis=0)))
    return model.w0 + float(model.w[idx] @ val) + pairwise


def _check_design(model: FMModel, design: Design):
    if model.n != design.n_features:
        raise IndexError(f"model has {model.n} features, design needs {design.n_features}")


def score_pair(model: FMModel, u: int, i: int, design: Design) -> float:
    """Score of company ``u`` for well ``i``; equal to ``score(model, encode_row(u, i, design))``."""
    _check_design(model, design)
    if not 0 <= u < design.n_companies:
        raise IndexError(f"company index {u} out of range")
    if not 0 <= i < design.n_wells:
        raise IndexError(f"well index {i} out of range")
    return float(kernels.pair_score(model.w0, model.w, model.V, design.n_companies, design.aux, u, i))


def utility_diff(model: FMModel, u: int, i: int, j: int, design: Design) -> float:
    if i == j:
        raise DegeneratePairError(f"observed and unobserved well are both {i}")
    return score_pair(model, u, i, design) - score_pair(model, u, j, design)


def sigmoid(d):
    """Logistic function, overflow-free for any finite input."""
    d = np.asarray(d, dtype=np.float64)
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return out[()] if out.ndim == 0 else out


def log_sigmoid(d):
    """ln(sigmoid(d)) without cancellation for large |d|."""
    d = np.asarray(d, dtype=np.float64)
    out = np.where(d >= 0, -np.log1p(np.exp(-np.abs(d))), d - np.log1p(np.exp(-np.abs(d))))
    return out[()] if out.ndim == 0 else out


MAGIC = b"WRFM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def dumps_model(model: FMModel) -> bytes:
    meta = dict(model.meta)
    meta["config"] = model.config.to_dict()
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, model.n, model.k, len(blob)),
        blob,
        struct.pack("<d", model.w0),
        model.w.astype("<f8").tobytes(),
        model.V.astype("<f8").tobytes(order="C"),
    ]
    return b"".join(parts)


def loads_model(data: bytes) -> FMModel:
    if len(data) < _HEADER.size:
        raise ModelFormatError("model file is truncated or empty")
    magic, version, n, k, L = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a wellrec model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelVersionError(version, FORMAT_VERSION)
    expected = _HEADER.size + L + 8 * (1 + n + n * k)
    if len(data) != expected or n < 1 or k < 1:
        raise ModelFormatError(f"model file has {len(data)} bytes, expected {expected}")
    pos = _HEADER.size
    try:
        meta = json.loads(data[pos:pos + L].decode("utf-8"))
        config = TrainConfig.from_dict(meta.pop("config"))
    except (ValueError, KeyError, TypeError, ConfigError) as exc:
        raise ModelFormatError(f"corrupt model metadata: {exc}") from None
    pos += L
    (w0,) = struct.unpack_from("<d", data, pos)
    pos += 8
    w = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
    pos += 8 * n
    V = np.frombuffer(data, dtype="<f8", count=n * k, offset=pos).astype(np.float64).reshape(n, k)
    return FMModel(w0, w, V, config, meta)


def save_model(model: FMModel, path) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    payload = dumps_model(model)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_model(path) -> FMModel:
    return loads_model(Path(path).read_bytes())
