import os
import subprocess
import sys

import numpy as np
import pytest

from wellrec import kernels
from wellrec.dataset import build_design
from wellrec.fm import TrainConfig, init_model
from wellrec.synthetic import planted_clusters
from wellrec.train import eligible_companies

from conftest import random_problem

nb = kernels.get_backend("numba")
np_ = kernels.get_backend("numpy")


def _args(model, design):
    return model.w0, model.w, model.V, design.n_companies, design.aux


def test_backend_names():
    assert nb.NAME == "numba" and np_.NAME == "numpy"
    with pytest.raises(ValueError):
        kernels.get_backend("cuda")


def test_env_flag_selects_numpy():
    code = "from wellrec import kernels; print(kernels.BACKEND)"
    for value, expect in (("0", "numpy"), ("off", "numpy"), ("1", "numba")):
        env = dict(os.environ, WELLREC_NUMBA=value)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == expect


def test_scores_agree(rng):
    for _ in range(30):
        design, model = random_problem(rng)
        for u in range(design.n_companies):
            a = nb.score_wells(*_args(model, design), u)
            b = np_.score_wells(*_args(model, design), u)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
            i = int(rng.integers(design.n_wells))
            assert nb.pair_score(*_args(model, design), u, i) == pytest.approx(a[i], rel=1e-12, abs=1e-12)
        us = rng.integers(design.n_companies, size=20)
        iis = rng.integers(design.n_wells, size=20)
        jjs = rng.integers(design.n_wells, size=20)
        np.testing.assert_allclose(nb.pair_diffs(*_args(model, design), us, iis, jjs),
                                   np_.pair_diffs(*_args(model, design), us, iis, jjs), rtol=1e-12, atol=1e-12)


def test_pair_update_agrees(rng):
    for _ in range(50):
        design, m1 = random_problem(rng)
        m2 = m1.copy()
        u = int(rng.integers(design.n_companies))
        i, j = (int(x) for x in rng.choice(design.n_wells, 2, replace=False))
        scale = float(rng.uniform(0.5, 3))
        r1 = nb.pair_update(*_args(m1, design), u, i, j, scale, 0.05, 0.1)
        r2 = np_.pair_update(*_args(m2, design), u, i, j, scale, 0.05, 0.1)
        assert r1 == pytest.approx(r2, rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(m1.w, m2.w, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(m1.V, m2.V, rtol=1e-12, atol=1e-12)


def test_warp_update_agrees(rng):
    for _ in range(50):
        design, m1 = random_problem(rng, n_wells=15)
        m2 = m1.copy()
        obs = np.sort(rng.choice(15, int(rng.integers(1, 10)), replace=False)).astype(np.int64)
        draws = rng.random(10)
        i = int(obs[0])
        r1 = nb.warp_update(*_args(m1, design), 0, i, obs, draws, 0.05, 0.1)
        r2 = np_.warp_update(*_args(m2, design), 0, i, obs, draws, 0.05, 0.1)
        assert r1[1:] == r2[1:]
        assert r1[0] == pytest.approx(r2[0], abs=1e-12)
        np.testing.assert_allclose(m1.V, m2.V, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("warp", [False, True])
def test_epoch_agrees(warp):
    data, table, _ = planted_clusters(n_companies=20, n_wells=80, core_size=20, per_company=15,
                                      attributes="noise", seed=3)
    design = build_design(data, table)
    indptr, indices = data.csr
    eligible = eligible_companies(data)
    U = np.random.default_rng(0).random((len(data), 22 if warp else 3))
    models = [init_model(design.n_features, TrainConfig(seed=1)) for _ in range(2)]
    results = [impl.run_epoch(*_args(m, design), indptr, indices, eligible, U, warp, 0.02, 0.1)
               for impl, m in zip((nb, np_), models)]
    assert results[0][1:] == results[1][1:]
    assert results[0][2] > 0
    np.testing.assert_allclose(models[0].w, models[1].w, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(models[0].V, models[1].V, rtol=1e-9, atol=1e-10)
