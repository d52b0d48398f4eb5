"""Pairwise learning-to-rank training of the FM (BPR and WARP losses)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .dataset import Design, InteractionSet, encode_row
from .errors import DegeneratePairError, NumericError, SaturationError
from .fm import FMModel, TrainConfig, init_model, log_sigmoid, sigmoid

PROBE_SIZE = 256
# rows of uniforms handed to the kernel per call; bounds memory for large catalogs
CHUNK = 1 << 15
# Largest |parameter| accepted after an epoch. L2-regularized fits stay O(1);
# past this SGD has diverged (WARP's rank weight at lr 0.1 can do this when
# continuous well attributes are present).
DIVERGENCE_LIMIT = 100.0
# probe mean ln sigmoid(d) below this triggers an instability warning
UNSTABLE_LOG_LIKELIHOOD = -10.0


class TripleSample(NamedTuple):
    u: int
    i: int
    j: int


@dataclass(frozen=True)
class EpochStats:
    """Diagnostics after ``epoch`` completed epochs (1-based; 0 is the initial model)."""

    epoch: int
    learning_rate: float
    objective: float
    mean_log_likelihood: float
    violation_rate: float
    updates: int


@dataclass
class LossTrace:
    """Per-epoch diagnostics measured on a fixed probe set of triples."""

    initial_objective: float = float("nan")
    epochs: list[EpochStats] = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)

    def __getitem__(self, n):
        return self.epochs[n]

    def objectives(self) -> np.ndarray:
        return np.array([e.objective for e in self.epochs])


def eligible_companies(train: InteractionSet) -> np.ndarray:
    """Companies with at least one observed and one unobserved well."""
    deg = train.degree()
    return np.flatnonzero((deg >= 1) & (deg < train.n_wells)).astype(np.int64)


def _nth_unobserved(obs, r):
    gaps = obs - np.arange(len(obs))
    return int(r + np.searchsorted(gaps, r, side="right"))


def _pick(x, n):
    return min(int(x * n), n - 1)


def sample_triple(train: InteractionSet, rng: np.random.Generator,
                  eligible: np.ndarray | None = None) -> TripleSample:
    """Draw (company, observed well, unobserved well).

    The negative is drawn uniformly from the company's unobserved wells by
    inverse rank, which matches rejection sampling in distribution while
    always consuming exactly three uniforms.
    """
    if eligible is None:
        eligible = eligible_companies(train)
    if eligible.size == 0:
        raise SaturationError("no company has both observed and unobserved wells")
    a, b, c = rng.random(3)
    u = int(eligible[_pick(a, eligible.size)])
    obs = train.observed(u)
    i = int(obs[_pick(b, obs.size)])
    j = _nth_unobserved(obs, _pick(c, train.n_wells - obs.size))
    return TripleSample(u, i, j)


def sample_triples(train: InteractionSet, n: int, rng: np.random.Generator) -> list[TripleSample]:
    eligible = eligible_companies(train)
    return [sample_triple(train, rng, eligible) for _ in range(n)]


def _diffs(model: FMModel, triples, design: Design) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return kernels.pair_diffs(model.w0, model.w, model.V, design.n_companies, design.aux,
                              t[:, 0].copy(), t[:, 1].copy(), t[:, 2].copy())


def bpr_objective(model: FMModel, triples, design: Design, lam: float) -> float:
    """sum over triples of ln sigmoid(d_uij), minus lam * ||theta||^2."""
    if len(triples) == 0:
        raise ValueError("bpr_objective needs at least one triple")
    return float(np.sum(log_sigmoid(_diffs(model, triples, design)))) - lam * model.squared_norm()


def bpr_gradient(model: FMModel, triple: TripleSample, design: Design, lam: float):
    """Dense gradient of ln sigmoid(d) - lam * ||theta||^2 as (dw0, dw, dV)."""
    u, i, j = triple
    if i == j:
        raise DegeneratePairError(f"observed and unobserved well are both {i}")
    xi = encode_row(u, i, design).dense()
    xj = encode_row(u, j, design).dense()
    V = model.V
    si, sj = V.T @ xi, V.T @ xj
    fi = xi @ model.w + 0.5 * (si @ si - np.sum((V * V).T @ (xi * xi)))
    fj = xj @ model.w + 0.5 * (sj @ sj - np.sum((V * V).T @ (xj * xj)))
    g = float(sigmoid(-(fi - fj)))
    dw0 = -2.0 * lam * model.w0
    dw = g * (xi - xj) - 2.0 * lam * model.w
    dd_V = (np.outer(xi, si) - V * (xi * xi)[:, None]) - (np.outer(xj, sj) - V * (xj * xj)[:, None])
    dV = g * dd_V - 2.0 * lam * V
    return dw0, dw, dV


def bpr_step(model: FMModel, triple: TripleSample, design: Design, lr: float, lam: float) -> FMModel:
    """Single stochastic ascent step on one triple (in place)."""
    u, i, j = triple
    if i == j:
        raise DegeneratePairError(f"observed and unobserved well are both {i}")
    w0, d = kernels.pair_update(model.w0, model.w, model.V, design.n_companies, design.aux,
                                u, i, j, 1.0, lr, lam)
    if not math.isfinite(d):
        raise NumericError(f"non-finite score difference for triple {tuple(triple)}")
    model.w0 = w0
    return model


def warp_weight(n_negatives: int, draws: int) -> float:
    """ln(floor(N / t) + 1): estimated-rank weight after t draws."""
    return math.log(n_negatives // draws + 1)


def warp_step(model: FMModel, u: int, i: int, train: InteractionSet, design: Design,
              max_samples: int, lr: float, lam: float, rng: np.random.Generator) -> int:
    """WARP update for observed pair (u, i); returns the number of negatives drawn."""
    obs = train.observed(u)
    if i not in set(obs.tolist()):
        raise ValueError(f"well {i} is not observed for company {u}")
    if obs.size >= train.n_wells:
        raise SaturationError(f"company {u} owns every well")
    draws = rng.random(max_samples)
    w0, used, status = kernels.warp_update(model.w0, model.w, model.V, design.n_companies,
                                           design.aux, u, i, obs, draws, lr, lam)
    if status < 0:
        raise NumericError(f"non-finite score while sampling negatives for ({u}, {i})")
    model.w0 = w0
    return int(used)


def lr_schedule(lr0: float, epoch: int, mode: str = "invscaling", exponent: float = 0.25) -> float:
    if mode == "constant":
        return lr0
    if mode == "invscaling":
        return lr0 / (epoch + 1) ** exponent
    raise ValueError(f"unknown schedule {mode!r}")


def _probe_stats(model, probe, design, lam):
    d = _diffs(model, probe, design)
    ll = log_sigmoid(d)
    return float(ll.sum()) - lam * model.squared_norm(), float(ll.mean()), float(np.mean(d <= 0))


def train(interactions: InteractionSet, design: Design, config: TrainConfig | None = None,
          on_epoch: Callable[[EpochStats], None] | None = None) -> tuple[FMModel, LossTrace]:
    """Fit an FM with the configured pairwise loss; deterministic given ``config.seed``.

    Each epoch applies ``len(interactions)`` sampled updates at that epoch's
    scheduled learning rate.
    """
    config = config or TrainConfig()
    if design.n_companies != interactions.n_companies or design.n_wells != interactions.n_wells:
        raise ValueError("design does not match the interaction catalog")
    rng = np.random.default_rng(config.seed)
    model = init_model(design.n_features, config, rng)
    model.meta.update(n_companies=design.n_companies, n_wells=design.n_wells, n_aux=design.n_aux)
    trace = LossTrace()
    if config.epochs == 0:
        return model, trace

    eligible = eligible_companies(interactions)
    if eligible.size == 0:
        raise SaturationError("no company has both observed and unobserved wells")
    probe = sample_triples(interactions, PROBE_SIZE, np.random.default_rng([config.seed, 1]))
    lam = config.regularization
    trace.initial_objective = _probe_stats(model, probe, design, lam)[0]

    indptr, indices = interactions.csr
    warp = config.loss == "warp"
    width = 2 + config.max_samples if warp else 3
    n_steps = len(interactions)
    warned = False
    for epoch in range(config.epochs):
        lr = lr_schedule(config.learning_rate, epoch, config.schedule, config.schedule_exponent)
        updates = 0
        for start in range(0, n_steps, CHUNK):
            U = rng.random((min(CHUNK, n_steps - start), width))
            w0, failed, applied = kernels.run_epoch(model.w0, model.w, model.V, design.n_companies,
                                                    design.aux, indptr, indices, eligible, U,
                                                    warp, lr, lam)
            model.w0 = w0
            updates += applied
            if failed >= 0:
                raise NumericError(f"non-finite score at epoch {epoch + 1}, step {start + failed}")
        if not model.is_finite():
            raise NumericError(f"non-finite parameters after epoch {epoch + 1}")
        peak = max(abs(model.w0), np.abs(model.w).max(), np.abs(model.V).max())
        if peak > DIVERGENCE_LIMIT:
            raise NumericError(f"training diverged at epoch {epoch + 1} (max |parameter| {peak:.3g}); "
                               "lower the learning rate or use the bpr loss")
        objective, mean_ll, violations = _probe_stats(model, probe, design, lam)
        if mean_ll < UNSTABLE_LOG_LIKELIHOOD and not warned:
            warnings.warn(f"training looks unstable at epoch {epoch + 1} (probe mean log-likelihood "
                          f"{mean_ll:.3g}); consider a lower learning rate or the bpr loss",
                          RuntimeWarning, stacklevel=2)
            warned = True
        stats = EpochStats(epoch + 1, lr, objective, mean_ll, violations, updates)
        trace.epochs.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return model, trace
