"""Hot loops of training and ranking.

The numba backend is used unless ``WELLREC_NUMBA=0`` is set in the
environment (or numba cannot be imported); the numpy backend implements
the same functions without compilation.
"""
import os
import warnings
from importlib import import_module

ENV_FLAG = "WELLREC_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "1").strip().lower() not in ("0", "false", "no", "off")


def get_backend(name: str):
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    return import_module(f"{__name__}._{name}")


if numba_requested():
    try:
        _impl = get_backend("numba")
    except ImportError:
        warnings.warn("numba is not importable; using the numpy kernels", RuntimeWarning)
        _impl = get_backend("numpy")
else:
    _impl = get_backend("numpy")

BACKEND = _impl.NAME
pair_score = _impl.pair_score
score_wells = _impl.score_wells
pair_diffs = _impl.pair_diffs
pair_update = _impl.pair_update
warp_update = _impl.warp_update
run_epoch = _impl.run_epoch
