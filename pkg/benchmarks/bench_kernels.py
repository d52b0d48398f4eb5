"""Compare the numba and numpy kernel backends on planted data.

    python3 benchmarks/bench_kernels.py [--companies 200] [--wells 800] [--repeat 3]

Both backends get identical inputs and random draws; the script reports
median wall time per operation and the largest parameter difference after
one training epoch.
"""
import argparse
import statistics
import time

import numpy as np

from wellrec.dataset import build_design
from wellrec.fm import TrainConfig, init_model
from wellrec.kernels import get_backend
from wellrec.synthetic import planted_clusters
from wellrec.train import eligible_companies


def _time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--companies", type=int, default=200)
    parser.add_argument("--wells", type=int, default=800)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    data, table, _ = planted_clusters(n_companies=args.companies, n_wells=args.wells, n_clusters=4,
                                      per_company=20, core_size=25, attributes="noise", seed=0)
    design = build_design(data, table)
    indptr, indices = data.csr
    eligible = eligible_companies(data)
    config = TrainConfig(learning_rate=0.01)
    draws = {loss: np.random.default_rng(1).random((len(data), 22 if loss == "warp" else 3))
             for loss in ("bpr", "warp")}
    print(f"{args.companies} companies, {args.wells} wells, {len(data)} interactions, "
          f"{design.n_features} features, k={config.factors}")

    backends = {name: get_backend(name) for name in ("numba", "numpy")}
    # compile outside the timed region
    warm = init_model(design.n_features, config)
    backends["numba"].run_epoch(warm.w0, warm.w, warm.V, design.n_companies, design.aux, indptr, indices,
                                eligible, draws["warp"][:4], True, 0.01, 0.1)
    backends["numba"].score_wells(warm.w0, warm.w, warm.V, design.n_companies, design.aux, 0)

    results = {}
    for name, impl in backends.items():
        row = {}
        for loss in ("bpr", "warp"):
            def epoch():
                m = init_model(design.n_features, config)
                impl.run_epoch(m.w0, m.w, m.V, design.n_companies, design.aux, indptr, indices, eligible,
                               draws[loss], loss == "warp", config.learning_rate, config.regularization)
                return m
            row[f"epoch_{loss}"], row[f"model_{loss}"] = _time(epoch, args.repeat)
        m = init_model(design.n_features, config)
        row["score_all"], _ = _time(lambda: [impl.score_wells(m.w0, m.w, m.V, design.n_companies, design.aux, u)
                                             for u in range(design.n_companies)], args.repeat)
        results[name] = row

    print(f"{'operation':<24}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for op, label in (("epoch_bpr", "epoch, bpr"), ("epoch_warp", "epoch, warp"),
                      ("score_all", "score all companies")):
        a, b = results["numba"][op], results["numpy"][op]
        print(f"{label:<24}{a:>12.4f}{b:>12.4f}{b / a:>9.1f}x")
    for loss in ("bpr", "warp"):
        ma, mb = results["numba"][f"model_{loss}"], results["numpy"][f"model_{loss}"]
        diff = max(np.abs(ma.w - mb.w).max(), np.abs(ma.V - mb.V).max())
        print(f"max |parameter difference| after one {loss} epoch: {diff:.2e}")


if __name__ == "__main__":
    main()
