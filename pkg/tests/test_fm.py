import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wellrec.dataset import Design, EncodedRow, encode_row
from wellrec.errors import ConfigError, DegeneratePairError, ModelFormatError, ModelVersionError
from wellrec.fm import (FMModel, TrainConfig, dumps_model, init_model, load_model, loads_model,
                        log_sigmoid, save_model, score, score_pair, sigmoid, utility_diff)

from conftest import fm_double_loop, fm_pairwise_matrix, random_problem


def _row(x):
    x = np.asarray(x, dtype=float)
    nz = np.flatnonzero(x)
    return EncodedRow(nz, x[nz], len(x))


def test_three_feature_example():
    w0, w = 0.5, np.array([1.0, -1.0, 2.0])
    V = np.array([[1.0], [2.0], [3.0]])
    x = np.array([1.0, 1.0, 0.0])
    assert fm_double_loop(w0, w, V, x) == 2.5
    model = FMModel(w0, w, V, TrainConfig(factors=1))
    assert score(model, _row(x)) == pytest.approx(2.5, abs=1e-12)


def test_zero_row_scores_bias():
    model = FMModel(0.7, np.ones(4), np.ones((4, 2)), TrainConfig(factors=2))
    assert score(model, _row(np.zeros(4))) == 0.7


def test_single_feature_has_no_interaction():
    model = FMModel(0.7, np.array([1.0, 2.0, 3.0]), np.ones((3, 2)), TrainConfig(factors=2))
    assert score(model, _row([0.0, 4.0, 0.0])) == pytest.approx(0.7 + 8.0, abs=1e-12)


def test_zero_factors_score_bias_for_every_pair(rng):
    design, model = random_problem(rng)
    model.w[:] = 0.0
    model.V[:] = 0.0
    for u in range(design.n_companies):
        for i in range(design.n_wells):
            assert score_pair(model, u, i, design) == model.w0


def test_score_rejects_out_of_range():
    model = FMModel(0.0, np.ones(3), np.ones((3, 1)), TrainConfig(factors=1))
    with pytest.raises(IndexError):
        score(model, EncodedRow(np.array([3]), np.array([1.0]), 4))


@given(st.integers(1, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=300, deadline=None)
def test_factorized_score_matches_double_loop(n, k, seed):
    rng = np.random.default_rng(seed)
    w0, w, V = rng.normal(), rng.normal(size=n), rng.normal(size=(n, k))
    x = rng.normal(size=n) * (rng.random(n) < 0.5)
    expect = fm_double_loop(w0, w, V, x)
    got = score(FMModel(w0, w, V, TrainConfig(factors=k)), _row(x))
    assert got == pytest.approx(expect, rel=1e-9, abs=1e-9)
    assert fm_pairwise_matrix(w0, w, V, x) == pytest.approx(expect, rel=1e-9, abs=1e-9)


def test_score_pair_matches_encoded_score(rng):
    for _ in range(20):
        design, model = random_problem(rng)
        for _ in range(50):
            u, i = rng.integers(design.n_companies), rng.integers(design.n_wells)
            x = encode_row(u, i, design)
            assert score_pair(model, u, i, design) == pytest.approx(score(model, x), rel=1e-12, abs=1e-12)
            assert score_pair(model, u, i, design) == pytest.approx(
                fm_double_loop(model.w0, model.w, model.V, x.dense()), rel=1e-9, abs=1e-9)


def test_score_pair_checks_design():
    design = Design(2, np.zeros((3, 1)))
    model = FMModel(0.0, np.zeros(5), np.zeros((5, 1)), TrainConfig(factors=1))
    with pytest.raises(IndexError):
        score_pair(model, 0, 0, design)


def test_utility_diff_invariances(rng):
    design, model = random_problem(rng, n_companies=4, n_wells=6, n_aux=2)
    u, i, j = 1, 2, 4
    d = utility_diff(model, u, i, j, design)
    other = model.copy()
    other.w0 += 17.0
    other.w[u] -= 3.0            # company term is common to both rows
    other.w[0] += 5.0            # another company's features are absent from both rows
    other.V[0] *= -2.0
    other.V[design.n_companies + 5] += 1.0   # a well outside the pair
    assert utility_diff(other, u, i, j, design) == pytest.approx(d, rel=1e-12, abs=1e-12)
    assert utility_diff(model, u, j, i, design) == pytest.approx(-d, rel=1e-12, abs=1e-12)
    with pytest.raises(DegeneratePairError):
        utility_diff(model, u, i, i, design)


def test_init_model_statistics():
    model = init_model(500, TrainConfig(factors=20, init_sigma=0.1, seed=3))
    assert model.w0 == 0.0 and not model.w.any()
    assert model.V.shape == (500, 20)
    assert 0.09 <= model.V.std() <= 0.11
    assert abs(model.V.mean()) < 0.01


def test_init_model_seeded():
    a = init_model(30, TrainConfig(factors=4, seed=9))
    b = init_model(30, TrainConfig(factors=4, seed=9))
    c = init_model(30, TrainConfig(factors=4, seed=10))
    assert np.array_equal(a.V, b.V) and not np.array_equal(a.V, c.V)
    with pytest.raises(ConfigError):
        init_model(0, TrainConfig())


@pytest.mark.parametrize("bad", [
    {"factors": 0}, {"loss": "hinge"}, {"epochs": -1}, {"learning_rate": 0.0},
    {"regularization": -0.1}, {"max_samples": 0}, {"init_sigma": 0.0},
    {"schedule": "cosine"}, {"learning_rate": float("nan")},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_config_dict_round_trip():
    cfg = TrainConfig(factors=7, loss="bpr", seed=11)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="bogus"):
        TrainConfig.from_dict({"bogus": 1})


def test_sigmoid_stable():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(710.0) == 1.0
    assert sigmoid(-710.0) >= 0.0 and math.isfinite(sigmoid(-710.0))
    assert math.isfinite(log_sigmoid(-710.0))
    assert log_sigmoid(-710.0) == pytest.approx(-710.0)
    assert log_sigmoid(0.0) == pytest.approx(math.log(0.5))
    d = np.linspace(-30, 30, 61)
    np.testing.assert_allclose(sigmoid(d), 1 / (1 + np.exp(-d)), rtol=1e-14)
    np.testing.assert_allclose(log_sigmoid(d), -np.log1p(np.exp(-d)), rtol=1e-12)


def test_model_round_trip(tmp_path, rng):
    _, model = random_problem(rng)
    model.meta["columns"] = ["production", "elevation", "duration_days"]
    path = tmp_path / "m.bin"
    save_model(model, path)
    back = load_model(path)
    assert back.w0 == model.w0
    assert np.array_equal(back.w, model.w) and np.array_equal(back.V, model.V)
    assert back.config == model.config and back.meta == model.meta
    assert dumps_model(back) == path.read_bytes()
    assert list(tmp_path.iterdir()) == [path]


def test_model_version_error(rng):
    _, model = random_problem(rng)
    data = bytearray(dumps_model(model))
    struct.pack_into("<I", data, 4, 2)
    with pytest.raises(ModelVersionError, match="2") as exc:
        loads_model(bytes(data))
    assert exc.value.found == 2 and exc.value.expected == 1


def test_model_format_errors(tmp_path, rng):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    with pytest.raises(ModelFormatError):
        load_model(empty)
    _, model = random_problem(rng)
    data = dumps_model(model)
    with pytest.raises(ModelFormatError):
        loads_model(data[:-8])
    with pytest.raises(ModelFormatError):
        loads_model(b"XXXX" + data[4:])
