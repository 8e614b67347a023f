"""Skip-gram with negative sampling over walk corpora."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ConfigError, DivergenceError, ValidationError
from .table import EmbeddingTable

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 128
    window: int = 2
    min_count: int = 1
    iterations: int = 100
    negatives_k: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.negatives_k < 1:
            raise ConfigError("negatives_k must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def skipgram_loss_grad(params, center, context, negatives):
    """Negative-sampling loss for one (center, context) pair and its gradient.

    ``params`` is ``(W_in, W_out)``: center vectors and context vectors. The
    loss is ``-log s(u_c . v) - sum_k log s(-u_k . v)`` with ``v = W_in[center]``,
    ``u_c = W_out[context]`` and ``u_k = W_out[negatives[k]]``.

    Returns
    -------
    loss : float
    grad : tuple of arrays shaped like ``params``
    """
    W_in, W_out = params
    v = W_in[center]
    negatives = np.asarray(negatives, dtype=np.int64)
    s_pos = float(W_out[context] @ v)
    s_neg = W_out[negatives] @ v
    loss = -float(_log_sigmoid(s_pos)) - float(np.sum(_log_sigmoid(-s_neg)))

    g_pos = _sigmoid(s_pos) - 1.0
    g_neg = _sigmoid(s_neg)
    g_in = np.zeros_like(W_in)
    g_out = np.zeros_like(W_out)
    g_in[center] = g_pos * W_out[context] + g_neg @ W_out[negatives]
    g_out[context] += g_pos * v
    np.add.at(g_out, negatives, g_neg[:, None] * v[None, :])
    return loss, (g_in, g_out)


UNIGRAM_TABLE_SIZE = 1_000_000


@njit(cache=True)
def _sig(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit(cache=True, fastmath=True)
def _sgd_pass(W_in, W_out, centers, contexts, negatives, lrs):
    # one exact gradient step of skipgram_loss_grad per pair, in the given order
    m = centers.shape[0]
    k = negatives.shape[1]
    d = W_in.shape[1]
    gv = np.empty(d, dtype=W_in.dtype)
    coef = np.empty(k + 1, dtype=W_in.dtype)
    targets = np.empty(k + 1, dtype=np.int64)
    loss = 0.0
    for p in range(m):
        c = centers[p]
        targets[0] = contexts[p]
        for j in range(k):
            targets[j + 1] = negatives[p, j]
        for j in range(k + 1):
            t = targets[j]
            s = 0.0
            for q in range(d):
                s += W_out[t, q] * W_in[c, q]
            if j == 0:
                coef[j] = _sig(s) - 1.0
                loss += math.log1p(math.exp(-s)) if s > -30.0 else -s
            else:
                coef[j] = _sig(s)
                loss += math.log1p(math.exp(s)) if s < 30.0 else s
        for q in range(d):
            acc = 0.0
            for j in range(k + 1):
                acc += coef[j] * W_out[targets[j], q]
            gv[q] = acc
        lr = lrs[p]
        for j in range(k + 1):
            t = targets[j]
            for q in range(d):
                W_out[t, q] -= lr * coef[j] * W_in[c, q]
        for q in range(d):
            W_in[c, q] -= lr * gv[q]
    return loss


def sgd_step(params, centers, contexts, negatives, lrs):
    """Apply sequential per-pair gradient steps in place; returns summed loss."""
    W_in, W_out = params
    return _sgd_pass(
        W_in,
        W_out,
        np.ascontiguousarray(centers, dtype=np.int64),
        np.ascontiguousarray(contexts, dtype=np.int64),
        np.ascontiguousarray(np.atleast_2d(negatives), dtype=np.int64),
        np.ascontiguousarray(lrs, dtype=np.float64),
    )


def context_pairs(sequences, window):
    """All (center, context) position pairs within ``window`` of each other."""
    centers, contexts = [], []
    for seq in sequences:
        n = len(seq)
        for off in range(1, window + 1):
            if n <= off:
                break
            centers.append(seq[:-off])
            contexts.append(seq[off:])
            centers.append(seq[off:])
            contexts.append(seq[:-off])
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers).astype(np.int64), np.concatenate(contexts).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SkipGramModel:
    table: EmbeddingTable
    context_vectors: np.ndarray
    loss_history: tuple


def train_skipgram(corpus, cfg, node_ids=None, return_model=False):
    """Train center/context vectors on a walk corpus.

    Nodes occurring fewer than ``cfg.min_count`` times are removed from the
    sequences first. The learning rate decays linearly from
    ``cfg.learning_rate`` to ``1e-4`` of it over all updates; negatives are
    drawn from the unigram distribution raised to 0.75.
    """
    if len(corpus) == 0:
        raise ValidationError("walk corpus is empty")
    freq = np.asarray(corpus.frequencies)
    vocab = np.flatnonzero(freq >= max(cfg.min_count, 1))
    if vocab.size == 0:
        raise ConfigError(f"no node reaches min_count={cfg.min_count}")
    remap = np.full(freq.shape[0], -1, dtype=np.int64)
    remap[vocab] = np.arange(vocab.size)
    seqs = []
    for s in corpus.sequences:
        r = remap[s]
        seqs.append(r[r >= 0])
    centers, contexts = context_pairs(seqs, cfg.window)

    rng = np.random.default_rng(cfg.seed)
    V, d = vocab.size, cfg.dim
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d))
    W_out = np.zeros((V, d))
    noise = freq[vocab].astype(np.float64) ** 0.75
    noise /= noise.sum()
    noise_cum = np.cumsum(noise)
    noise_cum[-1] = 1.0
    # word2vec-style lookup table: entry t covers quantile (t + 0.5) / size
    table = np.searchsorted(noise_cum, (np.arange(UNIGRAM_TABLE_SIZE) + 0.5) / UNIGRAM_TABLE_SIZE, side="right")
    np.minimum(table, V - 1, out=table)

    m = centers.size
    history = []
    total = m * cfg.iterations
    lr0 = cfg.learning_rate
    for epoch in range(cfg.iterations):
        if m == 0:
            history.append(0.0)
            continue
        order = rng.permutation(m)
        negs = table[rng.integers(0, UNIGRAM_TABLE_SIZE, size=(m, cfg.negatives_k))]
        step = epoch * m + np.arange(m)
        lrs = lr0 * (1.0 - (1.0 - 1e-4) * step / total)
        loss = _sgd_pass(W_in, W_out, centers[order], contexts[order], negs, lrs)
        if not np.isfinite(loss):
            raise DivergenceError(f"skip-gram loss became non-finite in epoch {epoch}")
        history.append(loss / m)
        _logger.debug("skip-gram epoch %d loss %.5f", epoch, loss / m)

    if node_ids is None:
        ids = tuple(str(int(v)) for v in vocab)
    else:
        ids = tuple(node_ids[int(v)] for v in vocab)
    table = EmbeddingTable(ids, W_in, "node")
    if return_model:
        return SkipGramModel(table, W_out, tuple(history))
    return table
