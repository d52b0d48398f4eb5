"""Command-line pipeline: train, recommend, evaluate, classify, plot-data, inspect.

Exit codes: 0 success, 2 usage/config, 3 ingestion, 4 numeric, 5 model/data mismatch.
Every failure prints one line ``wellrec: error[<kind>]: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dataset import (FEATURE_COLUMNS, Design, InteractionSet, build_design, load_interactions,
                      load_well_features, split_leave_one_out)
from .errors import (ConfigError, DataError, DimensionMismatchError, EvaluationError,
                     ModelFormatError, NumericError, SaturationError)
from .fm import FMModel, TrainConfig, dumps_model, load_model
from .metrics import (ThresholdSpec, class_separation_export, classify_wells, evaluate, pr_curve,
                      relevance_threshold, write_per_company_csv, write_pr_curve_csv,
                      write_report_csv, write_separation_csv)
from .ranker import recommend_all, recommendation_frequency, score_all_wells, write_recommendations
from .train import train

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4, 5

# config-file key / flag name -> TrainConfig field
ALIASES = {"alpha": "regularization", "sigma": "init_sigma", "lr": "learning_rate"}
_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}
_CASTS = {"int": int, "float": float, "str": str}


class CliError(Exception):
    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _cast(key, raw):
    name = ALIASES.get(key, key)
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return name, _CASTS[_FIELD_TYPES[name]](raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        name, cast = _cast(key.strip().replace("-", "_"), value.strip())
        values[name] = cast
    return values


def _add_data_args(p):
    p.add_argument("--interactions", required=True, help="CSV with operator_id,api_number")
    p.add_argument("--wells", required=True, help="CSV with api_number,production,elevation,duration_days")
    p.add_argument("--extra-columns", default="",
                   help="comma-separated extra numeric wells.csv columns appended as features")


def _add_train_args(p):
    g = p.add_argument_group("hyperparameters")
    d = TrainConfig()
    g.add_argument("--config", help="key = value file; explicit flags override it")
    g.add_argument("--factors", type=int, default=None, help=f"latent factors (default {d.factors})")
    g.add_argument("--loss", choices=("bpr", "warp"), default=None, help=f"default {d.loss}")
    g.add_argument("--epochs", type=int, default=None, help=f"default {d.epochs}")
    g.add_argument("--learning-rate", type=float, default=None, help=f"default {d.learning_rate}")
    g.add_argument("--schedule", choices=("constant", "invscaling"), default=None,
                   help=f"default {d.schedule}")
    g.add_argument("--schedule-exponent", type=float, default=None, help=f"default {d.schedule_exponent}")
    g.add_argument("--alpha", "--regularization", dest="regularization", type=float, default=None,
                   help=f"L2 weight (default {d.regularization})")
    g.add_argument("--max-samples", type=int, default=None,
                   help=f"WARP negative draws per update (default {d.max_samples})")
    g.add_argument("--sigma", "--init-sigma", dest="init_sigma", type=float, default=None,
                   help=f"latent factor init std (default {d.init_sigma})")
    g.add_argument("--seed", type=int, default=None, help=f"default {d.seed}")


def _add_eval_args(p):
    p.add_argument("--k", type=int, default=10, help="recommendation list length (default 10)")
    p.add_argument("--split-seed", type=int, default=None,
                   help="leave-one-out seed (default: the one recorded in the model, else 0)")
    p.add_argument("--threshold", default="median", help="median | fixed:<v> | quantile:<q>")
    p.add_argument("--scope", choices=("company", "global"), default="company")
    p.add_argument("--relevance", choices=("threshold", "holdout"), default="threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wellrec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wellrec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and write it with its loss trace")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--trace", help="loss-trace CSV (default: <model>.trace.csv)")
    p.add_argument("--holdout-seed", type=int, default=None,
                   help="train on the leave-one-out training set for this seed")

    p = sub.add_parser("recommend", help="top-k wells per company")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--company", action="append", help="operator id (repeatable; default all)")
    p.add_argument("--include-owned", action="store_true", help="do not exclude owned wells")
    p.add_argument("--out", help="recommendations CSV (default stdout)")
    p.add_argument("--frequency-out", help="CSV of how often each well was recommended")

    p = sub.add_parser("evaluate", help="leave-one-out hit rate, reciprocal rank, precision, recall")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    _add_eval_args(p)
    p.add_argument("--out", help="per-company CSV")
    p.add_argument("--report", help="aggregate metrics CSV")

    p = sub.add_parser("classify", help="label wells desirable/undesirable by score threshold")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--company", help="score for this operator (default: mean over all operators)")
    p.add_argument("--threshold", default="median")
    p.add_argument("--out", help="classification CSV (default stdout)")

    p = sub.add_parser("plot-data", help="precision-recall and class-separation CSVs")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    _add_eval_args(p)
    p.add_argument("--company", help="class-separation scores for this operator")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("inspect", help="print model provenance")
    p.add_argument("--model", required=True)
    return parser


@dataclass
class Invocation:
    command: str
    args: argparse.Namespace
    config: TrainConfig | None


def parse_invocation(argv) -> Invocation:
    """Parse argv; for ``train`` resolve defaults < config file < flags."""
    args = build_parser().parse_args(argv)
    config = None
    if args.command == "train":
        values = read_config_file(args.config) if args.config else {}
        for name in _FIELD_TYPES:
            flag = getattr(args, name, None)
            if flag is not None:
                values[name] = flag
        config = TrainConfig.from_dict(values)
    if getattr(args, "k", 1) < 1:
        raise ConfigError("--k must be >= 1")
    if getattr(args, "bins", 1) < 1:
        raise ConfigError("--bins must be >= 1")
    for attr in ("threshold",):
        if hasattr(args, attr):
            try:
                ThresholdSpec.parse(getattr(args, attr))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    return Invocation(args.command, args, config)


@contextlib.contextmanager
def atomic_open(path, mode="w"):
    """Write to a sibling temp file; rename over ``path`` only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kwargs = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class _Staged:
    """Collects output files and commits them together after all succeed."""

    def __init__(self):
        self.files: list[tuple[Path, bytes]] = []

    def add_text(self, path, writer):
        buf = io.StringIO(newline="")
        writer(buf)
        self.files.append((Path(path), buf.getvalue().encode("utf-8")))

    def add_bytes(self, path, data):
        self.files.append((Path(path), data))

    def commit(self):
        for path, data in self.files:
            with atomic_open(path, "wb") as fh:
                fh.write(data)


def _digest(ids) -> str:
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()


def _load_data(args, columns=None) -> tuple[InteractionSet, Design]:
    if columns is None:
        extra = tuple(c.strip() for c in args.extra_columns.split(",") if c.strip())
    else:
        extra = tuple(columns[len(FEATURE_COLUMNS):])
    interactions = load_interactions(args.interactions)
    table = load_well_features(args.wells, interactions, extra)
    return interactions, build_design(interactions, table)


def _load_model_for(args) -> tuple[FMModel, InteractionSet, Design]:
    model = load_model(args.model)
    interactions, design = _load_data(args, model.meta.get("columns"))
    checks = [
        ("feature count", model.n, design.n_features),
        ("companies", model.meta.get("n_companies", design.n_companies), design.n_companies),
        ("wells", model.meta.get("n_wells", design.n_wells), design.n_wells),
        ("auxiliary columns", model.meta.get("n_aux", design.n_aux), design.n_aux),
    ]
    for what, trained, given in checks:
        if trained != given:
            raise DimensionMismatchError(f"model was trained with {trained} {what}, data has {given}")
    if model.meta.get("company_ids_sha256", _digest(interactions.company_ids)) != _digest(interactions.company_ids):
        raise DimensionMismatchError("model was trained on a different operator catalog")
    if model.meta.get("well_ids_sha256", _digest(interactions.well_ids)) != _digest(interactions.well_ids):
        raise DimensionMismatchError("model was trained on a different well catalog")
    return model, interactions, design


def _split_seed(args, model):
    if args.split_seed is not None:
        return args.split_seed
    seed = model.meta.get("holdout_seed")
    if seed is None:
        print("wellrec: warning: model was trained on all interactions; held-out wells were seen in training",
              file=sys.stderr)
        return 0
    return seed


def run_train(inv: Invocation) -> int:
    args, config = inv.args, inv.config
    interactions, design = _load_data(args)
    data = interactions
    if args.holdout_seed is not None:
        data = split_leave_one_out(interactions, args.holdout_seed).train

    def report(stats):
        print(f"epoch {stats.epoch:>4}/{config.epochs}  lr={stats.learning_rate:.5f}  "
              f"objective={stats.objective:.4f}  mean_ll={stats.mean_log_likelihood:.4f}  "
              f"violations={stats.violation_rate:.3f}")

    print(f"training on {len(data)} interactions: {interactions.n_companies} operators, "
          f"{interactions.n_wells} wells, {design.n_aux} attributes ({kernels.BACKEND} kernels)")
    model, trace = train(data, design, config, on_epoch=report)
    model.meta.update(
        columns=list(design.columns),
        holdout_seed=args.holdout_seed,
        company_ids_sha256=_digest(interactions.company_ids),
        well_ids_sha256=_digest(interactions.well_ids),
    )

    def write_trace(fh):
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["epoch", "learning_rate", "objective", "mean_log_likelihood", "violation_rate", "updates"])
        if config.epochs:
            out.writerow([0, "", repr(trace.initial_objective), "", "", 0])
        for e in trace.epochs:
            out.writerow([e.epoch, repr(e.learning_rate), repr(e.objective), repr(e.mean_log_likelihood),
                          repr(e.violation_rate), e.updates])

    staged = _Staged()
    staged.add_bytes(args.model, dumps_model(model))
    staged.add_text(args.trace or f"{args.model}.trace.csv", write_trace)
    staged.commit()
    print(f"wrote {args.model}")
    return EXIT_OK


def _companies(args_companies, interactions):
    if not args_companies:
        return list(range(interactions.n_companies))
    missing = [c for c in args_companies if c not in interactions.company_index]
    if missing:
        raise ConfigError(f"unknown operator id(s): {', '.join(missing)}")
    return [interactions.company_index[c] for c in args_companies]


def run_recommend(inv: Invocation) -> int:
    args = inv.args
    model, interactions, design = _load_model_for(args)
    lists = recommend_all(model, args.k, design, interactions, not args.include_owned,
                          _companies(args.company, interactions))
    staged = _Staged()
    if args.out:
        staged.add_text(args.out, lambda fh: write_recommendations(lists, interactions, fh))
    freq = recommendation_frequency(lists)
    if args.frequency_out:
        def write_freq(fh):
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["api_number", "times_recommended"])
            for well, n in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])):
                out.writerow([interactions.well_ids[well], n])
        staged.add_text(args.frequency_out, write_freq)
    staged.commit()
    if not args.out:
        write_recommendations(lists, interactions, sys.stdout)
    top = max(freq.values(), default=0)
    print(f"{len(freq)} distinct wells recommended to {len(lists)} operators; "
          f"most frequent well recommended {top} time(s)", file=sys.stderr)
    return EXIT_OK


def _evaluation(args):
    model, interactions, design = _load_model_for(args)
    split = split_leave_one_out(interactions, _split_seed(args, model))
    return model, interactions, design, split


def run_evaluate(inv: Invocation) -> int:
    args = inv.args
    model, interactions, design, split = _evaluation(args)
    report = evaluate(model, split, design, args.k, args.threshold, args.scope, args.relevance)
    staged = _Staged()
    if args.out:
        staged.add_text(args.out, lambda fh: write_per_company_csv(
            report, interactions.company_ids, interactions.well_ids, fh))
    if args.report:
        staged.add_text(args.report, lambda fh: write_report_csv(report, fh))
    staged.commit()
    print(report.format_table())
    return EXIT_OK


def _desirability_scores(model, design, interactions, company):
    if company is not None:
        (u,) = _companies([company], interactions)
        return score_all_wells(model, u, design)
    return np.mean([score_all_wells(model, u, design) for u in range(design.n_companies)], axis=0)


def run_classify(inv: Invocation) -> int:
    args = inv.args
    model, interactions, design = _load_model_for(args)
    scores = _desirability_scores(model, design, interactions, args.company)
    result = classify_wells(scores, relevance_threshold(scores, args.threshold))

    def write(fh):
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["api_number", "score", "class"])
        for well, s, good in zip(interactions.well_ids, result.scores.tolist(), result.desirable.tolist()):
            out.writerow([well, repr(s), "desirable" if good else "undesirable"])

    if args.out:
        staged = _Staged()
        staged.add_text(args.out, write)
        staged.commit()
    else:
        write(sys.stdout)
    counts = result.counts
    print(f"threshold {result.threshold:.6g}: {counts['desirable']} desirable, "
          f"{counts['undesirable']} undesirable", file=sys.stderr)
    return EXIT_OK


def run_plot_data(inv: Invocation) -> int:
    args = inv.args
    model, interactions, design, split = _evaluation(args)
    scores, labels = [], []
    for u, h in split.holdout:
        s = score_all_wells(model, u, design)
        cand = np.ones(len(s), dtype=bool)
        cand[split.train.observed(u)] = False
        scores.append(s[cand])
        labels.append(np.flatnonzero(cand) == h)
    curve = pr_curve(np.concatenate(scores), np.concatenate(labels))

    well_scores = _desirability_scores(model, design, interactions, args.company)
    classes = classify_wells(well_scores, relevance_threshold(well_scores, args.threshold))
    table = class_separation_export(classes, args.bins)

    out_dir = Path(args.out_dir)
    staged = _Staged()
    staged.add_text(out_dir / "pr_curve.csv", lambda fh: write_pr_curve_csv(curve, fh))
    staged.add_text(out_dir / "class_separation.csv", lambda fh: write_separation_csv(table, fh))
    staged.commit()
    print(f"wrote {out_dir / 'pr_curve.csv'} ({len(curve.thresholds)} points) and "
          f"{out_dir / 'class_separation.csv'} ({args.bins} bins)")
    return EXIT_OK


def run_inspect(inv: Invocation) -> int:
    model = load_model(inv.args.model)
    info = {"n_features": model.n, "factors": model.k, "w0": model.w0,
            "config": model.config.to_dict(), **model.meta}
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "train": run_train,
    "recommend": run_recommend,
    "evaluate": run_evaluate,
    "classify": run_classify,
    "plot-data": run_plot_data,
    "inspect": run_inspect,
}


def _fail(kind, message, code):
    first = str(message).splitlines()[0] if str(message) else kind
    print(f"wellrec: error[{kind}]: {first}", file=sys.stderr)
    return code


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"wellrec: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    with warnings.catch_warnings():
        warnings.showwarning = _show_warning
        return _main(sys.argv[1:] if argv is None else argv)


def _main(argv) -> int:
    try:
        inv = parse_invocation(argv)
        return COMMANDS[inv.command](inv)
    except CliError as exc:
        return _fail(exc.kind, exc, exc.code)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_USAGE)
    except DimensionMismatchError as exc:
        return _fail("mismatch", exc, EXIT_MISMATCH)
    except NumericError as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except FileNotFoundError as exc:
        return _fail("ingestion", exc, EXIT_INGEST)
    except (DataError, ModelFormatError, SaturationError, EvaluationError, OSError) as exc:
        return _fail("ingestion", exc, EXIT_INGEST)


if __name__ == "__main__":
    sys.exit(main())
