"""Latent-closure unexpectedness for recommender systems.

Users' consumed items are embedded in a latent space; the closure of those
embeddings (a sphere, an axis-aligned box or the convex hull) is the user's
expected set, and an item's unexpectedness is its distance to that set.
Recommendations rank items by estimated rating plus ``alpha`` times
unexpectedness.
"""
from .closure import Box, Hull, Sphere, build_closure, hull_distance_fw
from .config import RunConfig, parse_config
from .dataset import HinGraph, InteractionLog, build_hin, ingest_ratings, split
from .errors import (
    ConfigError,
    DivergenceError,
    EmptyDatasetError,
    FormatError,
    LatentUnexpError,
    MissingEmbeddingError,
    ParseError,
    ValidationError,
)
from .estimators import train_bias, train_knn, train_mf, train_nmf
from .evaluation import EvalReport, evaluate, sweep_alpha, welch_t_test
from .pipeline import run_pipeline
from .recommender import ItemSpace, RecommenderConfig, build_profiles, recommend_all, recommend_top_n
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"
