"""Type-aware random walks over a heterogeneous information network.

From node ``v`` the walk moves to neighbor ``u`` with weight
``C(type(v), type(u)) / |N_type(u)(v)|``, renormalized over all neighbors
of ``v``. The per-type share of the probability mass is therefore
proportional to the transition coefficient of that relation.
"""
from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..dataset import EDGE_TYPES, NODE_TYPES, edge_type_name
from ..errors import ConfigError, ValidationError


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 100
    walks_per_node: int = 10
    coefficients: dict = field(default_factory=lambda: {t: 1.0 for t in EDGE_TYPES})
    metapath: tuple | None = None

    def __post_init__(self):
        if self.walk_length < 1:
            raise ConfigError("walk_length must be >= 1")
        if self.walks_per_node < 1:
            raise ConfigError("walks_per_node must be >= 1")
        coef = {t: 1.0 for t in EDGE_TYPES}
        for key, val in dict(self.coefficients).items():
            name = key if key in EDGE_TYPES else edge_type_name(key[0], key[1])
            coef[name] = float(val)
        if any(v < 0 for v in coef.values()):
            raise ConfigError("transition coefficients must be non-negative")
        if all(v == 0 for v in coef.values()):
            raise ConfigError("at least one transition coefficient must be positive")
        object.__setattr__(self, "coefficients", coef)
        if self.metapath is not None:
            mp = tuple(self.metapath)
            if not mp or any(t not in NODE_TYPES for t in mp):
                raise ConfigError(f"metapath entries must be node types {NODE_TYPES}")
            object.__setattr__(self, "metapath", mp)


@dataclass(frozen=True, eq=False)
class WalkCorpus:
    sequences: list
    frequencies: np.ndarray

    def __len__(self):
        return len(self.sequences)

    @property
    def vocabulary(self):
        return np.flatnonzero(self.frequencies)

    def equals(self, other):
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.sequences, other.sequences)
        )


def transition_table(graph, v, cfg, required_type=None):
    """Neighbors of ``v`` and their normalized transition probabilities.

    Returns ``(neighbors, probs)``; both are empty when every neighbor has
    zero weight (a dead end).
    """
    tv = graph.node_type(v)
    nbrs, weights = [], []
    for t, members in graph.adjacency[v].items():
        if required_type is not None and t != required_type:
            continue
        c = cfg.coefficients[edge_type_name(tv, t)]
        if c <= 0 or len(members) == 0:
            continue
        nbrs.append(members)
        weights.append(np.full(len(members), c / len(members)))
    if not nbrs:
        return np.empty(0, dtype=np.int64), np.empty(0)
    nb = np.concatenate(nbrs)
    w = np.concatenate(weights)
    order = np.argsort(nb, kind="stable")
    nb, w = nb[order], w[order]
    return nb, w / w.sum()


def type_shares(graph, v, cfg):
    """Probability of stepping from ``v`` into each neighbor type."""
    nb, p = transition_table(graph, v, cfg)
    out = {}
    for u, q in zip(nb.tolist(), p.tolist()):
        t = graph.node_type(u)
        out[t] = out.get(t, 0.0) + q
    return out


def walk_rng(seed, node, repeat):
    """Independent stream per (seed, start node, repeat index)."""
    return np.random.default_rng([int(seed), int(repeat), int(node)])


class _Sampler:
    def __init__(self, graph, cfg):
        self.graph = graph
        self.cfg = cfg
        self._cache = {}

    def table(self, v, required_type):
        key = (v, required_type)
        hit = self._cache.get(key)
        if hit is None:
            nb, p = transition_table(self.graph, v, self.cfg, required_type)
            cum = np.cumsum(p).tolist()
            if cum:
                cum[-1] = 1.0
            hit = self._cache[key] = (nb.tolist(), cum)
        return hit


def walk_from(graph, start, cfg, rng, sampler=None):
    """One walk of at most ``cfg.walk_length`` nodes starting at ``start``."""
    sampler = sampler or _Sampler(graph, cfg)
    mp = cfg.metapath
    pos = 0
    if mp is not None:
        st = graph.node_type(start)
        if st not in mp:
            return [start]
        pos = mp.index(st)
    walk = [start]
    draws = rng.random(cfg.walk_length - 1)
    cur = start
    for k in range(cfg.walk_length - 1):
        required = None if mp is None else mp[(pos + k + 1) % len(mp)]
        nb, cum = sampler.table(cur, required)
        if not nb:
            break
        cur = nb[bisect_right(cum, draws[k])] if draws[k] < cum[-1] else nb[-1]
        walk.append(cur)
    return walk


def hetero_walks(graph, cfg, seed=0):
    """``walks_per_node`` walks from every node, in (repeat, node) order."""
    if len(graph) == 0:
        raise ValidationError("graph has no nodes")
    sampler = _Sampler(graph, cfg)
    sequences = []
    freq = Counter()
    for rep in range(cfg.walks_per_node):
        for v in range(len(graph)):
            w = walk_from(graph, v, cfg, walk_rng(seed, v, rep), sampler)
            sequences.append(np.array(w, dtype=np.int64))
            freq.update(w)
    frequencies = np.zeros(len(graph), dtype=np.int64)
    for k, c in freq.items():
        frequencies[k] = c
    return WalkCorpus(sequences, frequencies)
