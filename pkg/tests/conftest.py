from pathlib import Path

import numpy as np
import pytest

from wellrec.dataset import Design, InteractionSet, encode_row
from wellrec.fm import FMModel, TrainConfig, log_sigmoid
from wellrec.train import TripleSample, bpr_gradient

FIXTURES = Path(__file__).parent / "fixtures"

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fm_double_loop(w0, w, V, x):
    """Reference FM score: literal sum over all feature pairs i < j."""
    n = len(x)
    y = w0
    for i in range(n):
        y += w[i] * x[i]
    for i in range(n):
        if x[i] == 0.0:
            continue
        for j in range(i + 1, n):
            if x[j] == 0.0:
                continue
            y += float(np.dot(V[i], V[j])) * x[i] * x[j]
    return y


def fm_pairwise_matrix(w0, w, V, x):
    """Reference FM score vectorized as x^T triu(V V^T, 1) x (no factorized identity)."""
    return w0 + w @ x + x @ np.triu(V @ V.T, 1) @ x


def random_problem(rng, n_companies=None, n_wells=None, n_aux=None, k=None, sparse_aux=True):
    """Random design plus random FM model sized for it."""
    C = n_companies or int(rng.integers(2, 8))
    I = n_wells or int(rng.integers(3, 12))
    A = int(rng.integers(0, 4)) if n_aux is None else n_aux
    k = k or int(rng.integers(1, 6))
    aux = rng.normal(size=(I, A))
    if sparse_aux and A:
        aux[rng.random((I, A)) < 0.3] = 0.0
    design = Design(C, aux)
    n = design.n_features
    model = FMModel(rng.normal(), rng.normal(size=n), rng.normal(scale=0.5, size=(n, k)),
                    TrainConfig(factors=k))
    return design, model


def random_interactions(rng, C, I, density=0.4, min_per_company=1):
    pairs = set()
    for u in range(C):
        owned = np.flatnonzero(rng.random(I) < density)
        if len(owned) < min_per_company:
            owned = rng.choice(I, min_per_company, replace=False)
        pairs.update((u, int(i)) for i in owned)
    return InteractionSet(tuple(f"c{u}" for u in range(C)), tuple(f"w{i}" for i in range(I)),
                          frozenset(pairs))


def _objective(w0, w, V, xi, xj, lam):
    d = fm_pairwise_matrix(w0, w, V, xi) - fm_pairwise_matrix(w0, w, V, xj)
    return float(log_sigmoid(d)) - lam * (w0 * w0 + w @ w + np.sum(V * V))


def random_triple(rng, design):
    u = int(rng.integers(design.n_companies))
    i, j = (int(x) for x in rng.choice(design.n_wells, 2, replace=False))
    return TripleSample(u, i, j)


def _rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)


def finite_difference_error(rng, n_triples=100, eps=1e-5):
    """Largest relative error of bpr_gradient against central differences."""
    worst = 0.0
    for _ in range(n_triples):
        design, model = random_problem(rng)
        lam = float(rng.uniform(0.01, 0.2))
        t = random_triple(rng, design)
        xi, xj = encode_row(t.u, t.i, design).dense(), encode_row(t.u, t.j, design).dense()
        dw0, dw, dV = bpr_gradient(model, t, design, lam)

        def J(w0=model.w0, w=model.w, V=model.V):
            return _objective(w0, w, V, xi, xj, lam)

        fd_w0 = (J(w0=model.w0 + eps) - J(w0=model.w0 - eps)) / (2 * eps)
        fd_w = np.empty_like(model.w)
        for p in range(model.n):
            hi, lo = model.w.copy(), model.w.copy()
            hi[p] += eps
            lo[p] -= eps
            fd_w[p] = (J(w=hi) - J(w=lo)) / (2 * eps)
        fd_V = np.empty_like(model.V)
        for p in range(model.n):
            for f in range(model.k):
                hi, lo = model.V.copy(), model.V.copy()
                hi[p, f] += eps
                lo[p, f] -= eps
                fd_V[p, f] = (J(V=hi) - J(V=lo)) / (2 * eps)
        worst = max(worst, _rel_err(dw0, fd_w0), _rel_err(dw, fd_w).max(), _rel_err(dV, fd_V).max())
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES
