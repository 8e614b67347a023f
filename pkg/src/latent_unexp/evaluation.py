"""Accuracy and beyond-accuracy metrics, alpha sweeps and significance tests."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import betainc

from .errors import MissingEmbeddingError, ValidationError
from .recommender import RecommenderConfig, recommend_all, unexpectedness_cache

METRIC_COLUMNS = ("rmse", "mae", "precision_at_n", "recall_at_n", "unexp", "serendipity", "diversity")
REPORT_HEADERS = ("RMSE", "MAE", "Pre@N", "Rec@N", "Unexp", "Ser", "Div")


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    precision_at_n: float
    recall_at_n: float
    unexp: float
    serendipity: float
    diversity: float
    n: int
    alpha: float
    estimator: str = ""
    closure: str = ""
    seed: int = 0

    def metrics(self):
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


def rmse_mae(model, test):
    if len(test) == 0:
        raise ValidationError("test log is empty")
    pred = model.predict_many(test.users, test.items)
    err = pred - test.ratings
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def _items_of(rec):
    return rec.item_list() if hasattr(rec, "item_list") else list(rec)


def relevant_items(test, threshold):
    out = {}
    for u, i, r in zip(test.users.tolist(), test.items.tolist(), test.ratings.tolist()):
        if r >= threshold:
            out.setdefault(u, set()).add(i)
    return out


def precision_recall_at_n(recs, test, threshold=4.0, n=5):
    """Mean precision and recall over users with at least one relevant test item."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    relevant = relevant_items(test, threshold)
    precs, recs_ = [], []
    for u in sorted(recs):
        rel = relevant.get(u)
        if not rel:
            continue
        top = _items_of(recs[u])[:n]
        hits = len(set(top) & rel)
        precs.append(hits / n)
        recs_.append(hits / len(rel))
    if not precs:
        return 0.0, 0.0
    return float(np.mean(precs)), float(np.mean(recs_))


def mean_unexpectedness(recs, profiles, items):
    """Mean closure distance over every (user, recommended item) pair."""
    vals = []
    for u in sorted(recs):
        rec_items = np.asarray(_items_of(recs[u]), dtype=np.int64)
        if rec_items.size == 0:
            continue
        if not np.all(items.mask[rec_items]):
            raise MissingEmbeddingError(f"user {u} was recommended an item without an embedding")
        closure = profiles[u].closure
        if closure is None:
            vals.extend([0.0] * rec_items.size)
        else:
            vals.extend(closure.distances(items.vectors[rec_items]).tolist())
    return float(np.mean(vals)) if vals else 0.0


def serendipity(recs, pm_recs, useful):
    """Mean per-user share of recommendations that are useful and not in the primitive list.

    ``useful`` is a set of ``(user, item)`` pairs or a predicate on them.
    """
    is_useful = useful if callable(useful) else (lambda u, i: (u, i) in useful)
    vals = []
    for u in sorted(recs):
        rs = _items_of(recs[u])
        if not rs:
            continue
        pm = set(_items_of(pm_recs.get(u, []))) if isinstance(pm_recs, dict) else set()
        hits = sum(1 for i in rs if i not in pm and is_useful(u, i))
        vals.append(hits / len(rs))
    return float(np.mean(vals)) if vals else 0.0


def intra_list_distance(vectors):
    """Mean ``1 - cosine`` over unordered pairs; zero-norm rows count as cosine 0.

    Returns ``(mean distance, number of pairs touching a zero-norm vector)``.
    """
    V = np.asarray(vectors, dtype=np.float64)
    m = V.shape[0]
    if m < 2:
        return None, 0
    norms = np.linalg.norm(V, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    C = (V / safe[:, None]) @ (V / safe[:, None]).T
    C[zero, :] = 0.0
    C[:, zero] = 0.0
    iu = np.triu_indices(m, 1)
    dist = 1.0 - np.clip(C[iu], -1.0, 1.0)
    degenerate = int(np.sum(zero[iu[0]] | zero[iu[1]]))
    return float(dist.mean()), degenerate


def diversity(recs, items, return_degenerate=False):
    vals = []
    degenerate = 0
    for u in sorted(recs):
        rec_items = np.asarray(_items_of(recs[u]), dtype=np.int64)
        if rec_items.size < 2:
            continue
        d, bad = intra_list_distance(items.vectors[rec_items])
        vals.append(d)
        degenerate += bad
    out = float(np.mean(vals)) if vals else 0.0
    return (out, degenerate) if return_degenerate else out


def student_t_sf2(t, df):
    """Two-sided tail probability of Student's t via the regularized incomplete beta."""
    if not np.isfinite(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def welch_t_test(sample_a, sample_b):
    """Welch's unequal-variance t statistic and two-sided p-value."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValidationError("each sample needs at least two values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = a.size, b.size
    diff = a.mean() - b.mean()
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        raise ValidationError("both samples have zero variance")
    t = diff / math.sqrt(se2)
    df = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return float(t), student_t_sf2(t, df)


@dataclass(frozen=True)
class EvalConfig:
    relevance_threshold: float = 4.0
    n: int = 5


def useful_pairs(test, threshold):
    return {(u, i) for u, i, r in zip(test.users.tolist(), test.items.tolist(), test.ratings.tolist()) if r >= threshold}


def evaluate(model, recs, pm_recs, profiles, items, test, cfg=EvalConfig(), alpha=0.0,
             estimator="", closure="", seed=0):
    """One report row: all seven metrics plus run metadata."""
    rmse, mae = rmse_mae(model, test)
    prec, rec = precision_recall_at_n(recs, test, cfg.relevance_threshold, cfg.n)
    return EvalReport(
        rmse=rmse,
        mae=mae,
        precision_at_n=prec,
        recall_at_n=rec,
        unexp=mean_unexpectedness(recs, profiles, items),
        serendipity=serendipity(recs, pm_recs, useful_pairs(test, cfg.relevance_threshold)),
        diversity=diversity(recs, items),
        n=cfg.n,
        alpha=float(alpha),
        estimator=estimator,
        closure=closure,
        seed=int(seed),
    )


@dataclass(frozen=True)
class SweepTable:
    rows: tuple

    def __post_init__(self):
        alphas = [a for a, _ in self.rows]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValidationError("sweep alphas must be strictly increasing")

    def column(self, name):
        return np.array([getattr(r, name) for _, r in self.rows])


def sweep_alpha(grid, model, pm_model, profiles, items, test, rec_cfg=RecommenderConfig(),
                eval_cfg=EvalConfig(), estimator="", seed=0, cache=None):
    """Evaluate the same trained model and closures for every alpha in ``grid``."""
    grid = [float(a) for a in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("alpha grid must be strictly increasing")
    if cache is None:
        cache = unexpectedness_cache(profiles, items)
    base = RecommenderConfig(**{**asdict(rec_cfg), "alpha": 0.0})
    pm_recs = recommend_all(pm_model, profiles, items, base, cache)
    rows = []
    for a in grid:
        cfg = RecommenderConfig(**{**asdict(rec_cfg), "alpha": a})
        recs = recommend_all(model, profiles, items, cfg, cache)
        rows.append((a, evaluate(model, recs, pm_recs, profiles, items, test, eval_cfg, a,
                                 estimator, rec_cfg.closure_kind, seed)))
    return SweepTable(tuple(rows))


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


REPORT_FIELDS = METRIC_COLUMNS + ("n", "alpha", "estimator", "closure", "seed")


def write_reports(reports, path):
    """Report CSV: the seven metrics in table order, then metadata columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADERS + REPORT_FIELDS[len(METRIC_COLUMNS):])
        for r in reports:
            w.writerow([_fmt(getattr(r, f)) for f in REPORT_FIELDS])


def read_reports(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        vals = dict(zip(REPORT_FIELDS, row))
        out.append(EvalReport(
            **{k: float(vals[k]) for k in METRIC_COLUMNS},
            n=int(vals["n"]), alpha=float(vals["alpha"]), estimator=vals["estimator"],
            closure=vals["closure"], seed=int(vals["seed"]),
        ))
    return out


def write_sweep(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("alpha",) + REPORT_HEADERS)
        for a, r in table.rows:
            w.writerow([repr(a)] + [repr(float(getattr(r, k))) for k in METRIC_COLUMNS])


def report_field_names():
    return [f.name for f in fields(EvalReport)]
