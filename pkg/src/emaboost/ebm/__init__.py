"""Explainable boosting machine engine."""

from .interactions import InteractionRanking, fast_rank_interactions, rank_pairs
from .model import (
    IDENTITY,
    LOGISTIC,
    EbmConfig,
    EbmModel,
    deserialize_model,
    fit_ebm,
    load_model,
    predict_proba,
    predict_score,
    save_model,
    serialize_model,
)
from .shapes import ShapeFunctions, extract_shape_functions, write_shape_csv

__all__ = [
    "IDENTITY",
    "LOGISTIC",
    "EbmConfig",
    "EbmModel",
    "InteractionRanking",
    "ShapeFunctions",
    "deserialize_model",
    "extract_shape_functions",
    "fast_rank_interactions",
    "fit_ebm",
    "load_model",
    "predict_proba",
    "predict_score",
    "rank_pairs",
    "save_model",
    "serialize_model",
    "write_shape_csv",
]
