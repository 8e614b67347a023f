"""Planted worlds for desk-scale experiments.

Ratings come from a low-rank model plus a bonus for items in the user's
home cluster; item embeddings are Gaussian blobs around cluster centres whose
pairwise distance equals ``separation``. Users consume mostly home items.

The defaults describe a mainstream/niche world: every user shares cluster 0
as home, home items rate just above 4 and niche items just below it. With
closures built from liked items only, each user's expected set sits in the
mainstream cluster while the estimators still see (and learn) the modest
niche penalty, which is the filter-bubble setting the hybrid utility targets.
With ``shared_home=False`` homes alternate across clusters instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionLog
from .embedding.table import EmbeddingTable
from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 100
    n_items: int = 50
    rank: int = 3
    noise: float = 0.05
    n_clusters: int = 2
    separation: float = 10.0
    cluster_std: float = 0.5
    dim: int = 4
    interactions_per_user: int = 16
    home_prob: float = 0.7
    home_affinity: float = 0.45
    shared_home: bool = True
    mu: float = 3.8
    factor_std: float = 0.3
    constant_factors: bool = False
    rating_min: float = 1.0
    rating_max: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.rank, self.n_clusters, self.dim) < 1:
            raise ConfigError("counts, rank, clusters and dim must be >= 1")
        if self.separation < 0 or self.cluster_std < 0 or self.noise < 0:
            raise ConfigError("separation, cluster_std and noise must be >= 0")
        if self.n_clusters > self.dim + 1:
            raise ConfigError("n_clusters cannot exceed dim + 1")
        if not 0.0 <= self.home_prob <= 1.0:
            raise ConfigError("home_prob must lie in [0, 1]")
        if not 1 <= self.interactions_per_user <= self.n_items:
            raise ConfigError("interactions_per_user must lie in [1, n_items]")
        if self.rating_min > self.rating_max:
            raise ConfigError("rating_min must not exceed rating_max")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    user_factors: np.ndarray
    item_factors: np.ndarray
    full_ratings: np.ndarray
    item_clusters: np.ndarray
    user_homes: np.ndarray
    centers: np.ndarray


def cluster_centers(n_clusters, dim, separation):
    """Centred simplex vertices with every pairwise distance equal to ``separation``."""
    C = np.zeros((n_clusters, dim))
    for k in range(n_clusters):
        if k < dim:
            C[k, k] = separation / np.sqrt(2.0)
    if n_clusters == dim + 1:
        # last vertex along the diagonal keeps the distances equal
        a = separation / np.sqrt(2.0)
        t = (a - a * np.sqrt(1.0 + dim)) / dim
        C[dim] = t
    return C - C.mean(axis=0)


def generate_synthetic(spec):
    """Return ``(log, item_embeddings, truth)`` for a planted world."""
    rng = np.random.default_rng(spec.seed)
    nu, ni = spec.n_users, spec.n_items
    if spec.constant_factors:
        P = np.full((nu, spec.rank), spec.factor_std)
        Q = np.full((ni, spec.rank), spec.factor_std)
    else:
        P = rng.normal(0.0, spec.factor_std, size=(nu, spec.rank))
        Q = rng.normal(0.0, spec.factor_std, size=(ni, spec.rank))
    clusters = np.arange(ni) % spec.n_clusters
    homes = np.zeros(nu, dtype=np.int64) if spec.shared_home else np.arange(nu) % spec.n_clusters
    R = spec.mu + P @ Q.T
    R = R + spec.home_affinity * (homes[:, None] == clusters[None, :])
    if spec.noise > 0:
        R = R + rng.normal(0.0, spec.noise, size=R.shape)
    R = np.clip(R, spec.rating_min, spec.rating_max)

    centers = cluster_centers(spec.n_clusters, spec.dim, spec.separation)
    E = centers[clusters] + rng.normal(0.0, spec.cluster_std, size=(ni, spec.dim)) if spec.cluster_std > 0 \
        else centers[clusters].copy()

    records = []
    for u in range(nu):
        home = np.flatnonzero(clusters == homes[u])
        away = np.flatnonzero(clusters != homes[u])
        n_home = int(rng.binomial(spec.interactions_per_user, spec.home_prob)) if away.size else spec.interactions_per_user
        n_home = min(n_home, home.size)
        n_away = min(spec.interactions_per_user - n_home, away.size)
        chosen = np.concatenate([
            rng.choice(home, size=n_home, replace=False),
            rng.choice(away, size=n_away, replace=False) if n_away else np.empty(0, dtype=np.int64),
        ])
        for i in np.sort(chosen):
            records.append((f"u{u}", f"i{i}", float(R[u, i])))
    log = InteractionLog.from_records(records, (spec.rating_min, spec.rating_max), min_count=1)
    table = EmbeddingTable(tuple(f"i{i}" for i in range(ni)), E, "item")
    return log, table, GroundTruth(P, Q, R, clusters, homes, centers)
