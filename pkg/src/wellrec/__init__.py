"""Factorization-machine well recommender trained with pairwise ranking losses."""
from .dataset import (Design, EncodedRow, InteractionSet, SplitPair, WellFeatureTable,
                      build_design, encode_row, load_interactions, load_well_features,
                      split_leave_one_out, standardize)
from .fm import FMModel, TrainConfig, init_model, load_model, save_model, score, score_pair
from .kernels import BACKEND
from .train import train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Design", "EncodedRow", "FMModel", "InteractionSet", "SplitPair", "TrainConfig",
    "WellFeatureTable", "build_design", "encode_row", "init_model", "load_interactions",
    "load_model", "load_well_features", "save_model", "score", "score_pair", "split_leave_one_out",
    "standardize", "train",
]
