"""Rating estimators: biased MF, non-negative MF, item KNN and a bias baseline.

Every model predicts through :meth:`RatingModel.predict_many`, which applies
the unseen-entity fallbacks and clips into the rating scale.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, DivergenceError, FormatError, ValidationError

_logger = logging.getLogger(__name__)

ESTIMATORS = ("mf", "nmf", "knn", "bias")


@dataclass(frozen=True)
class MfConfig:
    k: int = 32
    lr: float = 0.005
    reg: float = 0.02
    epochs: int = 30
    seed: int = 0
    init_std: float = 0.1

    def __post_init__(self):
        if self.k < 1 or self.epochs < 1:
            raise ConfigError("k and epochs must be >= 1")
        if not self.lr > 0 or self.reg < 0:
            raise ConfigError("lr must be positive and reg non-negative")


@dataclass(frozen=True)
class KnnConfig:
    k_neighbors: int = 40

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")


class RatingModel:
    """Base class; subclasses implement ``_raw(users, items)`` on seen entities."""

    kind = "base"

    def __init__(self, rating_scale, user_seen, item_seen, config=None):
        self.rating_scale = (float(rating_scale[0]), float(rating_scale[1]))
        self.user_seen = np.asarray(user_seen, dtype=bool)
        self.item_seen = np.asarray(item_seen, dtype=bool)
        self.config = config or {}

    @property
    def n_users(self):
        return self.user_seen.shape[0]

    @property
    def n_items(self):
        return self.item_seen.shape[0]

    def _known(self, idx, seen):
        idx = np.asarray(idx, dtype=np.int64)
        ok = (idx >= 0) & (idx < seen.shape[0])
        ok[ok] = seen[idx[ok]]
        return ok

    def predict_many(self, users, items):
        users, items = np.broadcast_arrays(
            np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64)
        )
        users, items = users.ravel(), items.ravel()
        uk = self._known(users, self.user_seen)
        ik = self._known(items, self.item_seen)
        raw = self._raw(users, items, uk, ik)
        return np.clip(raw, *self.rating_scale)

    def predict(self, user, item):
        return float(self.predict_many([user], [item])[0])

    def score_items(self, user, items):
        items = np.asarray(items, dtype=np.int64)
        return self.predict_many(np.full(items.shape, user), items)

    def _raw(self, users, items, uk, ik):
        raise NotImplementedError

    def arrays(self):
        """Named parameter arrays for checkpointing."""
        raise NotImplementedError


def _seen(train):
    us = np.zeros(train.user_count, dtype=bool)
    its = np.zeros(train.item_count, dtype=bool)
    us[train.users] = True
    its[train.items] = True
    return us, its


class BiasModel(RatingModel):
    kind = "bias"

    def __init__(self, mu, b_user, b_item, rating_scale, user_seen, item_seen, config=None):
        super().__init__(rating_scale, user_seen, item_seen, config)
        self.mu = float(mu)
        self.b_user = np.asarray(b_user, dtype=np.float64)
        self.b_item = np.asarray(b_item, dtype=np.float64)

    def _raw(self, users, items, uk, ik):
        out = np.full(users.shape, self.mu)
        out[uk] += self.b_user[users[uk]]
        out[ik] += self.b_item[items[ik]]
        return out

    def arrays(self):
        return {"mu": np.array([self.mu]), "b_user": self.b_user, "b_item": self.b_item}


def train_bias(train, reg=0.0, passes=2):
    """Global mean plus item then user regularized residual means, ``passes`` times."""
    if len(train) == 0:
        raise ValidationError("training log is empty")
    if reg < 0:
        raise ConfigError("reg must be non-negative")
    u, i, r = train.users, train.items, train.ratings
    mu = float(r.mean())
    bu = np.zeros(train.user_count)
    bi = np.zeros(train.item_count)
    nu = np.bincount(u, minlength=train.user_count)
    ni = np.bincount(i, minlength=train.item_count)
    for _ in range(passes):
        bi = np.bincount(i, weights=r - mu - bu[u], minlength=train.item_count) / np.maximum(reg + ni, 1e-300)
        bi[ni == 0] = 0.0
        bu = np.bincount(u, weights=r - mu - bi[i], minlength=train.user_count) / np.maximum(reg + nu, 1e-300)
        bu[nu == 0] = 0.0
    us, its = _seen(train)
    return BiasModel(mu, bu, bi, train.rating_scale, us, its, {"reg": reg, "passes": passes})


class MfModel(RatingModel):
    kind = "mf"

    def __init__(self, mu, b_user, b_item, P, Q, rating_scale, user_seen, item_seen, config=None, loss_history=()):
        super().__init__(rating_scale, user_seen, item_seen, config)
        self.mu = float(mu)
        self.b_user = np.asarray(b_user, dtype=np.float64)
        self.b_item = np.asarray(b_item, dtype=np.float64)
        self.P = np.asarray(P, dtype=np.float64)
        self.Q = np.asarray(Q, dtype=np.float64)
        self.loss_history = tuple(loss_history)

    @property
    def factors(self):
        return self.P.shape[1]

    def _raw(self, users, items, uk, ik):
        out = np.full(users.shape, self.mu)
        out[uk] += self.b_user[users[uk]]
        out[ik] += self.b_item[items[ik]]
        both = uk & ik
        out[both] += np.einsum("ij,ij->i", self.P[users[both]], self.Q[items[both]])
        return out

    def arrays(self):
        return {"mu": np.array([self.mu]), "b_user": self.b_user, "b_item": self.b_item, "P": self.P, "Q": self.Q}


class NmfModel(RatingModel):
    kind = "nmf"

    def __init__(self, mu, P, Q, rating_scale, user_seen, item_seen, config=None, loss_history=()):
        super().__init__(rating_scale, user_seen, item_seen, config)
        self.mu = float(mu)
        self.P = np.asarray(P, dtype=np.float64)
        self.Q = np.asarray(Q, dtype=np.float64)
        self.loss_history = tuple(loss_history)

    def _raw(self, users, items, uk, ik):
        # unseen entities fall back to the global mean
        out = np.full(users.shape, self.mu)
        both = uk & ik
        out[both] = np.einsum("ij,ij->i", self.P[users[both]], self.Q[items[both]])
        return out

    def arrays(self):
        return {"mu": np.array([self.mu]), "P": self.P, "Q": self.Q}


@njit(cache=True)
def _mf_epoch(users, items, ratings, order, mu, bu, bi, P, Q, lr, reg, biased, nonneg):
    k = P.shape[1]
    sq = 0.0
    for t in range(order.shape[0]):
        n = order[t]
        u = users[n]
        i = items[n]
        dot = 0.0
        for f in range(k):
            dot += P[u, f] * Q[i, f]
        pred = mu + bu[u] + bi[i] + dot if biased else dot
        err = ratings[n] - pred
        sq += err * err
        if biased:
            bu[u] += lr * (err - reg * bu[u])
            bi[i] += lr * (err - reg * bi[i])
        for f in range(k):
            pf = P[u, f]
            qf = Q[i, f]
            P[u, f] = pf + lr * (err * qf - reg * pf)
            Q[i, f] = qf + lr * (err * pf - reg * qf)
            if nonneg:
                if P[u, f] < 0.0:
                    P[u, f] = 0.0
                if Q[i, f] < 0.0:
                    Q[i, f] = 0.0
    return sq


def _sgd_train(train, cfg, biased, nonneg):
    if len(train) == 0:
        raise ValidationError("training log is empty")
    rng = np.random.default_rng(cfg.seed)
    mu = float(train.ratings.mean())
    nu, ni = train.user_count, train.item_count
    if nonneg:
        scale = np.sqrt(max(mu, 0.0) / cfg.k)
        P = rng.uniform(0.0, 2.0 * scale, size=(nu, cfg.k))
        Q = rng.uniform(0.0, 2.0 * scale, size=(ni, cfg.k))
    else:
        P = rng.normal(0.0, cfg.init_std, size=(nu, cfg.k))
        Q = rng.normal(0.0, cfg.init_std, size=(ni, cfg.k))
    bu = np.zeros(nu)
    bi = np.zeros(ni)
    users = np.ascontiguousarray(train.users)
    items = np.ascontiguousarray(train.items)
    ratings = np.ascontiguousarray(train.ratings)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        sq = _mf_epoch(users, items, ratings, order, mu, bu, bi, P, Q, cfg.lr, cfg.reg, biased, nonneg)
        rmse = float(np.sqrt(sq / len(train)))
        if not np.isfinite(rmse) or not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
            raise DivergenceError(f"SGD diverged in epoch {epoch} with lr={cfg.lr}")
        history.append(rmse)
    return mu, bu, bi, P, Q, history


def train_mf(train, cfg=MfConfig()):
    """Biased matrix factorization ``mu + b_u + b_i + p_u . q_i`` fit by SGD."""
    mu, bu, bi, P, Q, hist = _sgd_train(train, cfg, biased=True, nonneg=False)
    us, its = _seen(train)
    return MfModel(mu, bu, bi, P, Q, train.rating_scale, us, its, asdict(cfg), hist)


def train_nmf(train, cfg=MfConfig(lr=0.01, reg=0.02, k=15, epochs=50)):
    """Non-negative factorization ``p_u . q_i`` fit by projected SGD."""
    if np.any(train.ratings < 0):
        raise ValidationError("NMF requires non-negative ratings")
    mu, _, _, P, Q, hist = _sgd_train(train, cfg, biased=False, nonneg=True)
    us, its = _seen(train)
    return NmfModel(mu, P, Q, train.rating_scale, us, its, asdict(cfg), hist)


class KnnModel(RatingModel):
    """Item-based neighborhood model over user-mean-centred ratings."""

    kind = "knn"

    def __init__(self, mu, user_means, neighbors, neighbor_sims, rating_scale, user_seen, item_seen,
                 user_ratings, config=None):
        super().__init__(rating_scale, user_seen, item_seen, config)
        self.mu = float(mu)
        self.user_means = np.asarray(user_means, dtype=np.float64)
        self.neighbors = np.asarray(neighbors, dtype=np.int64)
        self.neighbor_sims = np.asarray(neighbor_sims, dtype=np.float64)
        self.user_ratings = user_ratings

    @property
    def k(self):
        return self.neighbors.shape[1]

    def similarity(self, i, j):
        row = self.neighbors[i]
        hit = np.flatnonzero(row == j)
        return float(self.neighbor_sims[i, hit[0]]) if hit.size else 0.0

    def _raw(self, users, items, uk, ik):
        out = np.full(users.shape, self.mu)
        for n in np.flatnonzero(uk):
            u = int(users[n])
            mean = self.user_means[u]
            out[n] = mean
            if not ik[n]:
                continue
            rated = self.user_ratings.get(u, {})
            num = den = 0.0
            for j, s in zip(self.neighbors[items[n]].tolist(), self.neighbor_sims[items[n]].tolist()):
                if j < 0 or s <= 0.0:
                    # rows are sorted by similarity; only positive neighbours vote
                    break
                r = rated.get(j)
                if r is not None:
                    num += s * (r - mean)
                    den += abs(s)
            if den > 0.0:
                out[n] = mean + num / den
        return out

    def arrays(self):
        users, items, ratings = [], [], []
        for u in sorted(self.user_ratings):
            for i in sorted(self.user_ratings[u]):
                users.append(u)
                items.append(i)
                ratings.append(self.user_ratings[u][i])
        return {
            "mu": np.array([self.mu]),
            "user_means": self.user_means,
            "neighbors": self.neighbors,
            "neighbor_sims": self.neighbor_sims,
            "r_users": np.array(users, dtype=np.int64),
            "r_items": np.array(items, dtype=np.int64),
            "r_values": np.array(ratings, dtype=np.float64),
        }


def item_similarities(train):
    """Dense item-item cosine over ratings centred by each user's mean."""
    nu, ni = train.user_count, train.item_count
    counts = np.bincount(train.users, minlength=nu)
    sums = np.bincount(train.users, weights=train.ratings, minlength=nu)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    R = np.zeros((nu, ni))
    R[train.users, train.items] = train.ratings - means[train.users]
    norms = np.linalg.norm(R, axis=0)
    S = R.T @ R
    denom = np.outer(norms, norms)
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.where(denom > 0, S / denom, 0.0)
    S = np.clip((S + S.T) / 2.0, -1.0, 1.0)
    return S, means


def train_knn(train, cfg=KnnConfig()):
    if len(train) == 0:
        raise ValidationError("training log is empty")
    S, means = item_similarities(train)
    ni = train.item_count
    k = min(cfg.k_neighbors, max(ni - 1, 1))
    neighbors = np.full((ni, k), -1, dtype=np.int64)
    sims = np.zeros((ni, k))
    for i in range(ni):
        cand = np.delete(np.arange(ni), i)
        s = S[i, cand]
        order = np.lexsort((cand, -s))[:k]
        neighbors[i, : order.size] = cand[order]
        sims[i, : order.size] = s[order]
    us, its = _seen(train)
    return KnnModel(
        float(train.ratings.mean()), means, neighbors, sims, train.rating_scale, us, its,
        train.ratings_by_user(), asdict(cfg),
    )


def train_estimator(kind, train, mf_cfg=None, nmf_cfg=None, knn_cfg=None, bias_reg=0.0):
    if kind == "mf":
        return train_mf(train, mf_cfg or MfConfig())
    if kind == "nmf":
        return train_nmf(train, nmf_cfg or MfConfig(lr=0.01, reg=0.02, k=15, epochs=50))
    if kind == "knn":
        return train_knn(train, knn_cfg or KnnConfig())
    if kind == "bias":
        return train_bias(train, bias_reg)
    raise ConfigError(f"unknown estimator {kind!r}; expected one of {ESTIMATORS}")


# checkpoint: b"LUMD", u32 version, kind tag, JSON config echo, scale and seen
# masks, then named arrays; floats as float32 little-endian, indices as int64
_MAGIC = b"LUMD"
_VERSION = 1


def _wstr(fh, s):
    b = s.encode("utf-8")
    fh.write(struct.pack("<Q", len(b)))
    fh.write(b)


def _rexact(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise FormatError("truncated model checkpoint")
    return b


def _rstr(fh):
    (n,) = struct.unpack("<Q", _rexact(fh, 8))
    return _rexact(fh, n).decode("utf-8")


def _warray(fh, name, a):
    a = np.asarray(a)
    if a.dtype == bool:
        code, data = 2, a.astype("u1")
    elif np.issubdtype(a.dtype, np.integer):
        code, data = 1, a.astype("<i8")
    else:
        code, data = 0, a.astype("<f4")
    _wstr(fh, name)
    fh.write(struct.pack("<BB", code, a.ndim))
    fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    fh.write(np.ascontiguousarray(data).tobytes())


def _rarray(fh):
    name = _rstr(fh)
    code, ndim = struct.unpack("<BB", _rexact(fh, 2))
    shape = struct.unpack(f"<{ndim}Q", _rexact(fh, 8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    dt, size = {0: ("<f4", 4), 1: ("<i8", 8), 2: ("u1", 1)}[code]
    a = np.frombuffer(_rexact(fh, size * count), dtype=dt).reshape(shape)
    if code == 0:
        a = a.astype(np.float64)
    elif code == 1:
        a = a.astype(np.int64)
    else:
        a = a.astype(bool)
    return name, a


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        _wstr(fh, model.kind)
        _wstr(fh, json.dumps(model.config, sort_keys=True))
        arrays = {
            "rating_scale": np.array(model.rating_scale),
            "user_seen": model.user_seen,
            "item_seen": model.item_seen,
            **model.arrays(),
        }
        fh.write(struct.pack("<Q", len(arrays)))
        for name, a in arrays.items():
            _warray(fh, name, a)


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise FormatError(f"{path} is not a model checkpoint")
        (version,) = struct.unpack("<I", _rexact(fh, 4))
        if version != _VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        kind = _rstr(fh)
        config = json.loads(_rstr(fh))
        (count,) = struct.unpack("<Q", _rexact(fh, 8))
        a = dict(_rarray(fh) for _ in range(count))
    scale = tuple(a["rating_scale"].tolist())
    common = (scale, a["user_seen"], a["item_seen"])
    if kind == "bias":
        return BiasModel(a["mu"][0], a["b_user"], a["b_item"], *common, config)
    if kind == "mf":
        return MfModel(a["mu"][0], a["b_user"], a["b_item"], a["P"], a["Q"], *common, config)
    if kind == "nmf":
        return NmfModel(a["mu"][0], a["P"], a["Q"], *common, config)
    if kind == "knn":
        ratings = {}
        for u, i, r in zip(a["r_users"].tolist(), a["r_items"].tolist(), a["r_values"].tolist()):
            ratings.setdefault(u, {})[i] = r
        return KnnModel(a["mu"][0], a["user_means"], a["neighbors"], a["neighbor_sims"], *common, ratings, config)
    raise FormatError(f"unknown model kind {kind!r}")


def roundtrip(model, path):
    """Save then load, so the in-memory model matches the checkpoint bit for bit."""
    save_model(model, path)
    return load_model(path)
