"""Hybrid-utility recommendation: estimated rating plus weighted unexpectedness.

A user's expected set is the closure of the embeddings of everything they
consumed in training. A candidate's unexpectedness is its distance to that
closure, and candidates are ranked by ``est_rating + alpha * unexpectedness``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .closure import CLOSURE_KINDS, build_closure
from .errors import ConfigError, MissingEmbeddingError, ValidationError

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecommenderConfig:
    alpha: float = 0.03
    top_n: int = 5
    cold_start_threshold: int = 5
    closure_kind: str = "hull"
    positive_only: bool = False
    relevance_threshold: float = 4.0

    def __post_init__(self):
        if not (self.alpha >= 0 and np.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be a finite value >= 0, got {self.alpha}")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")
        if self.cold_start_threshold < 0:
            raise ConfigError("cold_start_threshold must be >= 0")
        if self.closure_kind not in CLOSURE_KINDS:
            raise ConfigError(f"closure_kind must be one of {CLOSURE_KINDS}, got {self.closure_kind!r}")


class ItemSpace:
    """Item-index-aligned embedding matrix with a mask of embeddable items."""

    def __init__(self, vectors, mask=None):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.mask = np.ones(len(self.vectors), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    @classmethod
    def from_table(cls, table, item_map):
        V, mask = table.matrix_for(list(item_map))
        missing = int((~mask).sum())
        if missing:
            _logger.info("%d of %d items have no embedding and are excluded", missing, len(mask))
        return cls(V, mask)

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def missing_count(self):
        return int((~self.mask).sum())

    def vector(self, item):
        if not (0 <= item < len(self.mask)) or not self.mask[item]:
            raise MissingEmbeddingError(f"item {item} has no embedding")
        return self.vectors[item]

    def embeddable(self):
        return np.flatnonzero(self.mask)


@dataclass(frozen=True, eq=False)
class UserProfile:
    user: int
    consumed: np.ndarray
    closure: object | None
    cold: bool = False
    embedded: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def unexpectedness(profile, item_embedding):
    """Distance from an item embedding to the user's closure (0 inside)."""
    if profile.closure is None:
        raise MissingEmbeddingError(f"user {profile.user} has no closure")
    x = np.asarray(item_embedding, dtype=np.float64)
    if x.shape != (profile.closure.dim,):
        raise ValidationError(f"embedding dimension {x.shape} does not match closure dimension {profile.closure.dim}")
    return profile.closure.distance(x)


def utility(est_rating, unexp, alpha):
    return est_rating + alpha * unexp


def build_profiles(train, items, closure_kind="hull", cold_start_threshold=5, positive_only=False,
                   relevance_threshold=4.0, closure_kwargs=None):
    """One profile per training user.

    Users with fewer than ``cold_start_threshold`` embeddable consumed items
    are flagged cold; a closure is still built when at least one item has an
    embedding.
    """
    if closure_kind not in CLOSURE_KINDS:
        raise ConfigError(f"closure_kind must be one of {CLOSURE_KINDS}")
    kwargs = closure_kwargs or {}
    consumed = train.items_by_user()
    if positive_only:
        rel = train.take(train.ratings >= relevance_threshold).items_by_user()
    profiles = {}
    for u in sorted(consumed):
        all_items = consumed[u]
        gen = rel.get(u, np.empty(0, dtype=np.int64)) if positive_only else all_items
        emb = gen[items.mask[gen]]
        closure = build_closure(closure_kind, items.vectors[emb], **kwargs) if emb.size else None
        cold = emb.size < cold_start_threshold or closure is None
        profiles[u] = UserProfile(u, all_items, closure, cold, emb)
    return profiles


@dataclass(frozen=True, eq=False)
class RecommendationList:
    user: int
    items: np.ndarray
    est_ratings: np.ndarray
    unexpectedness: np.ndarray
    utilities: np.ndarray

    def __len__(self):
        return len(self.items)

    def item_list(self):
        return self.items.tolist()


def candidate_items(profile, items):
    """Embeddable items the user did not consume in training."""
    cand = items.embeddable()
    return np.setdiff1d(cand, profile.consumed, assume_unique=True)


def profile_unexpectedness(profile, items, candidates):
    """Distances of ``candidates`` to the profile closure (zeros without a closure)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if profile.closure is None or candidates.size == 0:
        return np.zeros(candidates.size)
    if not np.all(items.mask[candidates]):
        raise MissingEmbeddingError("candidate items without embeddings")
    return profile.closure.distances(items.vectors[candidates])


def rank(items, est, unexp, alpha, top_n):
    util = utility(est, unexp, alpha)
    order = np.lexsort((items, -util))[:top_n]
    return order, util


def recommend_top_n(user, model, profile, items, cfg, candidates=None, unexp=None):
    """Top-N by hybrid utility, ties broken by ascending item index.

    ``unexp`` may carry precomputed distances aligned with ``candidates``.
    Cold profiles use ``alpha = 0``.
    """
    if candidates is None:
        candidates = candidate_items(profile, items)
    candidates = np.asarray(candidates, dtype=np.int64)
    keep = ~np.isin(candidates, profile.consumed) & items.mask[candidates]
    if unexp is not None:
        unexp = np.asarray(unexp, dtype=np.float64)[keep]
    candidates = candidates[keep]
    if candidates.size == 0:
        e = np.empty(0)
        return RecommendationList(user, np.empty(0, dtype=np.int64), e, e, e)
    est = model.score_items(user, candidates)
    if unexp is None:
        unexp = profile_unexpectedness(profile, items, candidates)
    alpha = 0.0 if profile.cold else cfg.alpha
    order, util = rank(candidates, est, unexp, alpha, cfg.top_n)
    return RecommendationList(user, candidates[order], est[order], unexp[order], util[order])


def unexpectedness_cache(profiles, items):
    """Per-user ``(candidates, distances)``; reusable across estimators and alphas."""
    out = {}
    for u, prof in profiles.items():
        cand = candidate_items(prof, items)
        out[u] = (cand, profile_unexpectedness(prof, items, cand))
    return out


def recommend_all(model, profiles, items, cfg, cache=None):
    if cache is None:
        cache = unexpectedness_cache(profiles, items)
    recs = {}
    for u in sorted(profiles):
        cand, dist = cache[u]
        recs[u] = recommend_top_n(u, model, profiles[u], items, cfg, cand, dist)
    return recs


def write_recommendations(recs, train, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "rank", "item_id", "est_rating", "unexpectedness", "utility"])
        for u in sorted(recs):
            rl = recs[u]
            for r in range(len(rl)):
                w.writerow([
                    train.user_map.id(u),
                    r + 1,
                    train.item_map.id(int(rl.items[r])),
                    repr(float(rl.est_ratings[r])),
                    repr(float(rl.unexpectedness[r])),
                    repr(float(rl.utilities[r])),
                ])
