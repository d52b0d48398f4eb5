import csv
import json

import pytest

from wellrec.cli import main, parse_invocation, read_config_file
from wellrec.errors import ConfigError
from wellrec.fm import TrainConfig, load_model
from wellrec.synthetic import planted_clusters, write_csv


@pytest.fixture
def data_args(fixture_dir):
    return ["--interactions", str(fixture_dir / "interactions.csv"), "--wells", str(fixture_dir / "wells.csv")]


def _train(data_args, model, *extra):
    return main(["train", *data_args, "--model", str(model), "--holdout-seed", "0", *extra])


def test_precedence_defaults_file_flags(tmp_path, data_args):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# tuned\nfactors = 8\nalpha = 0.05\nloss = bpr\n\n")
    inv = parse_invocation(["train", *data_args, "--model", "m", "--config", str(cfg), "--factors", "4"])
    assert inv.config == TrainConfig(factors=4, regularization=0.05, loss="bpr")
    assert parse_invocation(["train", *data_args, "--model", "m"]).config == TrainConfig()


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("factors: 8\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)
    bad.write_text("colour = red\n")
    with pytest.raises(ConfigError, match="colour"):
        read_config_file(bad)


@pytest.mark.parametrize("argv", [
    ["train", "--factors", "0"],
    ["train", "--bogus-flag", "1"],
    ["train", "--loss", "hinge"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_2(argv, data_args, tmp_path, capsys):
    full = argv[:1] + (data_args + ["--model", str(tmp_path / "m.bin")] if argv[:1] == ["train"] else []) + argv[1:]
    assert main(full) == 2
    err = capsys.readouterr().err
    assert err.startswith("wellrec: error[")
    assert not (tmp_path / "m.bin").exists()


def test_missing_file_exit_3(fixture_dir, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "wells.csv"
    code = main(["train", "--interactions", str(fixture_dir / "interactions.csv"), "--wells", str(missing),
                 "--model", str(tmp_path / "m.bin")])
    assert code == 3
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "m.bin").exists()


def test_divergence_exit_4(data_args, tmp_path, capsys):
    assert _train(data_args, tmp_path / "m.bin", "--seed", "7") == 4
    err = capsys.readouterr().err
    assert "error[numeric]" in err and "learning rate" in err
    assert list(tmp_path.iterdir()) == []


def test_catalog_mismatch_exit_5(data_args, tmp_path, capsys):
    data, table, _ = planted_clusters(n_companies=10, n_wells=60, per_company=10, core_size=20, seed=1)
    ipath, wpath = write_csv(data, table, tmp_path / "other")
    model = tmp_path / "m.bin"
    assert main(["train", "--interactions", str(ipath), "--wells", str(wpath), "--model", str(model),
                 "--epochs", "1"]) == 0
    assert main(["evaluate", *data_args, "--model", str(model)]) == 5
    assert "error[mismatch]" in capsys.readouterr().err


def test_bad_model_file_exit_3(data_args, tmp_path):
    bad = tmp_path / "m.bin"
    bad.write_bytes(b"")
    assert main(["evaluate", *data_args, "--model", str(bad)]) == 3


def test_end_to_end(data_args, tmp_path, capsys):
    model = tmp_path / "m.bin"
    assert _train(data_args, model, "--epochs", "2", "--seed", "7") == 0
    out = capsys.readouterr()
    assert "epoch    2/2" in out.out
    trace = list(csv.DictReader((tmp_path / "m.bin.trace.csv").open()))
    assert [r["epoch"] for r in trace] == ["0", "1", "2"]

    recs = tmp_path / "recs.csv"
    assert main(["recommend", *data_args, "--model", str(model), "--k", "5", "--out", str(recs),
                 "--frequency-out", str(tmp_path / "freq.csv")]) == 0
    rows = list(csv.DictReader(recs.open()))
    assert len(rows) == 12 * 5
    assert {r["rank"] for r in rows} == {"1", "2", "3", "4", "5"}

    assert main(["evaluate", *data_args, "--model", str(model), "--out", str(tmp_path / "per.csv"),
                 "--report", str(tmp_path / "rep.csv")]) == 0
    report = dict(csv.reader((tmp_path / "rep.csv").open()))
    for name in ("hit_rate", "reciprocal_rank", "precision", "recall"):
        assert 0.0 <= float(report[name]) <= 1.0
    assert float(report["hit_rate"]) >= float(report["reciprocal_rank"])

    assert main(["classify", *data_args, "--model", str(model), "--out", str(tmp_path / "cls.csv")]) == 0
    classes = [r["class"] for r in csv.DictReader((tmp_path / "cls.csv").open())]
    assert len(classes) == 44 and classes.count("desirable") == 22

    assert main(["plot-data", *data_args, "--model", str(model), "--out-dir", str(tmp_path / "plots")]) == 0
    for name, header in (("pr_curve.csv", "threshold,recall,precision"),
                         ("class_separation.csv", "bin_lo,bin_hi,desirable_count,undesirable_count")):
        lines = (tmp_path / "plots" / name).read_text().splitlines()
        assert lines[0] == header and len(lines) > 1

    capsys.readouterr()
    assert main(["inspect", "--model", str(model)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["holdout_seed"] == 0 and info["config"]["epochs"] == 2


def test_unknown_company_exit_2(data_args, tmp_path):
    model = tmp_path / "m.bin"
    assert _train(data_args, model, "--epochs", "1", "--loss", "bpr") == 0
    assert main(["recommend", *data_args, "--model", str(model), "--company", "no-such-operator"]) == 2


def test_training_files_are_byte_identical(data_args, tmp_path):
    for name in ("a.bin", "b.bin"):
        assert _train(data_args, tmp_path / name, "--epochs", "3", "--loss", "bpr", "--seed", "5") == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.bin.trace.csv").read_bytes() == (tmp_path / "b.bin.trace.csv").read_bytes()
    assert load_model(tmp_path / "a.bin").meta["columns"] == ["production", "elevation", "duration_days"]
