"""End-to-end orchestration: ingest, split, embed, closures, estimator, recommend, evaluate.

Every stage draws its randomness from ``child_seed(run.seed, stage)``.
Trained artifacts are persisted and re-read before use, so a run resumed
from disk evaluates exactly the same numbers as the run that wrote them.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import closure as closure_mod
from .config import check_paths, child_seed, config_hash, parse_config_text, serialize_config
from .dataset import (
    build_hin,
    ingest_ratings,
    item_node,
    read_extra_edges,
    read_feature_table,
    split,
    user_node,
    write_ratings,
)
from .embedding import (
    AutoencoderConfig,
    EmbeddingTable,
    SkipGramConfig,
    WalkConfig,
    hetero_walks,
    load_embeddings,
    save_embeddings,
    train_autoencoder,
    train_skipgram,
)
from .errors import LatentUnexpError, ValidationError
from .estimators import KnnConfig, MfConfig, load_model, roundtrip, train_bias, train_knn, train_mf, train_nmf
from .evaluation import (
    EvalConfig,
    evaluate,
    sweep_alpha,
    welch_t_test,
    write_reports,
    write_sweep,
    METRIC_COLUMNS,
)
from .recommender import (
    ItemSpace,
    RecommenderConfig,
    UserProfile,
    build_profiles,
    recommend_all,
    unexpectedness_cache,
    write_recommendations,
)
from .synthetic import SyntheticSpec, generate_synthetic

_logger = logging.getLogger(__name__)

STAGES = ("split", "embed", "estimator", "pm")

# the clustered experiment world: planted embeddings, closures over liked items
CLUSTERED_WORLD = {
    "data.source": "synthetic",
    "data.min_count": 1,
    "embedding.method": "synthetic",
    "recommender.positive_only": True,
}


class PipelineError(LatentUnexpError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"stage '{stage}' failed: {cause}")


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except PipelineError:
        raise
    except (LatentUnexpError, ValueError, OSError, FloatingPointError) as exc:
        raise PipelineError(name, exc) from exc


@contextlib.contextmanager
def output_lock(out_dir):
    """Refuse concurrent writers to one output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(f"{out_dir} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def seeds_for(cfg):
    return {name: child_seed(cfg.run.seed, name) for name in STAGES}


def synthetic_spec(cfg):
    s = cfg.synth
    return SyntheticSpec(
        n_users=s.n_users, n_items=s.n_items, rank=s.rank, noise=s.noise, n_clusters=s.n_clusters,
        separation=s.separation, cluster_std=s.cluster_std, dim=s.dim,
        interactions_per_user=s.interactions_per_user, home_prob=s.home_prob,
        home_affinity=s.home_affinity, shared_home=s.shared_home,
        factor_std=s.factor_std, mu=s.mu, rating_min=cfg.data.scale_min, rating_max=cfg.data.scale_max,
        seed=s.seed,
    )


def load_data(cfg):
    """Filtered log plus, for synthetic worlds, the planted item embeddings."""
    if cfg.data.source == "synthetic":
        log, table, _ = generate_synthetic(synthetic_spec(cfg))
        if cfg.data.min_count > 1:
            from .dataset import filter_min_count

            log = filter_min_count(log, cfg.data.min_count)
        return log, table
    log = ingest_ratings(cfg.data.ratings, (cfg.data.scale_min, cfg.data.scale_max), cfg.data.min_count)
    return log, None


def split_log(cfg, log, seeds):
    return split(log, cfg.data.split_ratio, seeds["split"], cfg.data.split_mode, cfg.data.test_days)


def _feature_tables(cfg):
    uf = read_feature_table(cfg.data.user_features) if cfg.data.user_features else []
    itf = read_feature_table(cfg.data.item_features) if cfg.data.item_features else []
    return uf, itf


def walk_config(cfg):
    w = cfg.walk
    coef = {"UU": w.c_uu, "UE": w.c_ue, "UI": w.c_ui, "EI": w.c_ei, "EE": w.c_ee, "II": w.c_ii}
    return WalkConfig(w.walk_length, w.walks_per_node, coef, tuple(w.metapath) if w.metapath else None)


def feature_vectors(train, user_features=(), item_features=()):
    """Shared-dimension inputs for the autoencoder.

    Multi-hot ``column=value`` indicators when feature tables are given;
    otherwise each user is its rating row and each item its rating column,
    placed in disjoint blocks of one ``users + items`` wide vector.
    """
    uid = [user_node(u) for u in train.user_map]
    iid = [item_node(i) for i in train.item_map]
    if user_features or item_features:
        vocab = sorted({f"{c}={v}" for _, c, v in list(user_features) + list(item_features)})
        col = {k: n for n, k in enumerate(vocab)}
        X = {key: np.zeros(len(vocab)) for key in uid + iid}
        for prefix, table, known in (("U:", user_features, train.user_map), ("I:", item_features, train.item_map)):
            for ent, c, v in table:
                if ent not in known:
                    raise ValidationError(f"feature row references unknown id {ent!r}")
                X[prefix + ent][col[f"{c}={v}"]] = 1.0
        return X
    nu, ni = train.user_count, train.item_count
    top = train.rating_scale[1] if train.rating_scale[1] > 0 else 1.0
    M = np.zeros((nu + ni, nu + ni))
    M[train.users, nu + train.items] = train.ratings / top
    M[nu + train.items, train.users] = train.ratings / top
    return {key: M[k] for k, key in enumerate(uid + iid)}


def embed(cfg, train, synthetic_table, seeds):
    """Item embedding table keyed by raw item id, plus the full trained table."""
    method = cfg.embedding.method
    if method == "synthetic":
        if synthetic_table is None:
            raise ValidationError("synthetic embeddings need data.source = synthetic")
        return synthetic_table, synthetic_table
    if method == "load":
        table = load_embeddings(cfg.embedding.path)
        if any(s.startswith("I:") for s in table.ids):
            return table.select("I:", "item"), table
        return EmbeddingTable(table.ids, table.vectors, "item"), table
    uf, itf = _feature_tables(cfg)
    if method == "hine":
        edges = read_extra_edges(cfg.data.edges) if cfg.data.edges else []
        graph = build_hin(train, uf, itf, edges)
        corpus = hetero_walks(graph, walk_config(cfg), seeds["embed"])
        s = cfg.skipgram
        sg = SkipGramConfig(cfg.embedding.dim, s.window, s.min_count, s.iterations, s.negatives,
                            s.learning_rate, seeds["embed"])
        table = train_skipgram(corpus, sg, node_ids=graph.node_ids)
        return table.select("I:", "item"), table
    if method == "ae":
        a = cfg.autoencoder
        _, table = train_autoencoder(
            feature_vectors(train, uf, itf),
            AutoencoderConfig(cfg.embedding.dim, a.learning_rate, a.epochs, a.batch_size, seeds["embed"]),
        )
        return table.select("I:", "item"), table
    raise ValidationError(f"unknown embedding method {method!r}")


def rec_config(cfg, alpha=None):
    r = cfg.recommender
    return RecommenderConfig(
        alpha=r.alpha if alpha is None else alpha, top_n=r.top_n, cold_start_threshold=r.cold_start_threshold,
        closure_kind=cfg.closure.kind, positive_only=r.positive_only,
        relevance_threshold=cfg.eval.relevance_threshold,
    )


def make_profiles(cfg, train, items, closure_kind=None):
    """Profiles whose closures are rounded to the persisted float32 precision."""
    kind = closure_kind or cfg.closure.kind
    kwargs = {"enclosing": cfg.closure.enclosing_sphere} if kind == "sphere" else (
        {"tol": cfg.closure.tol} if kind == "hull" else {})
    profiles = build_profiles(train, items, kind, cfg.recommender.cold_start_threshold,
                              cfg.recommender.positive_only, cfg.eval.relevance_threshold, kwargs)
    return {u: _with_closure(p, None if p.closure is None else closure_mod.quantize_closure(p.closure))
            for u, p in profiles.items()}


def _with_closure(profile, closure):
    return UserProfile(profile.user, profile.consumed, closure, profile.cold or closure is None, profile.embedded)


def train_model(cfg, train, seeds, kind=None):
    e = cfg.estimator
    kind = kind or e.kind
    if kind == "mf":
        return train_mf(train, MfConfig(e.k, e.lr, e.reg, e.epochs, seeds["estimator"]))
    if kind == "nmf":
        return train_nmf(train, MfConfig(e.nmf_k, e.nmf_lr, e.nmf_reg, e.nmf_epochs, seeds["estimator"]))
    if kind == "knn":
        return train_knn(train, KnnConfig(e.knn_k))
    raise ValidationError(f"unknown estimator {kind!r}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class RunArtifacts:
    log: object
    split: object
    items: ItemSpace
    profiles: dict
    model: object
    pm_model: object
    recs: dict
    pm_recs: dict
    report: object
    paths: dict


PREPARE_STAGES = ("ingest", "split", "embed", "closures", "train")


@dataclass(frozen=True, eq=False)
class Prepared:
    log: object
    split: object = None
    items: ItemSpace = None
    profiles: dict = None
    model: object = None
    pm_model: object = None
    paths: dict = None
    seeds: dict = None


# config sections each persisted artifact depends on
ARTIFACT_SECTIONS = {
    "embeddings": ("data", "synth", "embedding", "walk", "skipgram", "autoencoder", "run"),
    "closures": ("data", "synth", "embedding", "walk", "skipgram", "autoencoder", "closure",
                 "recommender", "eval", "run"),
    "model": ("data", "synth", "estimator", "run"),
    "pm_model": ("data", "synth", "estimator", "run"),
}


def artifact_stamps(cfg):
    """Hash of the configuration sections behind each artifact."""
    lines = serialize_config(cfg).splitlines()
    return {
        key: hashlib.sha256("\n".join(ln for ln in lines if ln.split(".", 1)[0] in sections).encode()).hexdigest()
        for key, sections in ARTIFACT_SECTIONS.items()
    }


def artifact_paths(out_dir):
    out = Path(out_dir)
    return {k: out / v for k, v in {
        "config": "config.txt", "interactions": "interactions.csv", "train": "train.csv",
        "test": "test.csv", "embeddings": "embeddings.luem", "closures": "closures.lucl",
        "model": "model.lumd", "pm_model": "pm_model.lumd", "recommendations": "recommendations.csv",
        "report": "report.csv", "manifest": "manifest.json",
    }.items()}


def prepare(cfg, out_dir, reuse=False, until="train"):
    """Run the stages up to and including ``until``.

    With ``reuse``, embeddings, closures and models already present in
    ``out_dir`` are loaded instead of recomputed, provided the configuration
    sections they depend on are unchanged (tracked in ``stamps.json``).
    """
    if until not in PREPARE_STAGES:
        raise ValidationError(f"unknown stage {until!r}; valid stages: {', '.join(PREPARE_STAGES)}")
    stop = PREPARE_STAGES.index(until)
    paths = artifact_paths(out_dir)
    seeds = seeds_for(cfg)
    with stage("config"):
        check_paths(cfg)
        paths["config"].write_text(serialize_config(cfg), encoding="utf-8")
        stamps_path = Path(out_dir) / "stamps.json"
        old_stamps = json.loads(stamps_path.read_text(encoding="utf-8")) if stamps_path.exists() else {}
        new_stamps = artifact_stamps(cfg)

    def reusing(key):
        return reuse and paths[key].exists() and old_stamps.get(key) == new_stamps[key]

    def stamp(key):
        old_stamps[key] = new_stamps[key]
        stamps_path.write_text(json.dumps(old_stamps, indent=2, sort_keys=True), encoding="utf-8")

    with stage("ingest"):
        log, synth_table = load_data(cfg)
        write_ratings(log, paths["interactions"])
    if stop == 0:
        return Prepared(log, paths=paths, seeds=seeds)
    with stage("split"):
        sp = split_log(cfg, log, seeds)
        write_ratings(sp.train, paths["train"])
        write_ratings(sp.test, paths["test"])
    if stop == 1:
        return Prepared(log, sp, paths=paths, seeds=seeds)
    with stage("embed"):
        if not reusing("embeddings"):
            item_table, _ = embed(cfg, sp.train, synth_table, seeds)
            save_embeddings(item_table, paths["embeddings"], binary=True)
            stamp("embeddings")
        item_table = load_embeddings(paths["embeddings"], "item")
        items = ItemSpace.from_table(item_table, log.item_map)
    if stop == 2:
        return Prepared(log, sp, items, paths=paths, seeds=seeds)
    with stage("closures"):
        profiles = make_profiles(cfg, sp.train, items)
        if reusing("closures"):
            stored = closure_mod.load_closures(paths["closures"], tol=cfg.closure.tol)
            profiles = {u: _with_closure(p, stored.get(sp.train.user_map.id(u))) for u, p in profiles.items()}
        else:
            closure_mod.save_closures({sp.train.user_map.id(u): p.closure for u, p in profiles.items()},
                                      paths["closures"])
            stamp("closures")
    if stop == 3:
        return Prepared(log, sp, items, profiles, paths=paths, seeds=seeds)
    with stage("train"):
        if reusing("model"):
            model = load_model(paths["model"])
        else:
            model = roundtrip(train_model(cfg, sp.train, seeds), paths["model"])
            stamp("model")
        if reusing("pm_model"):
            pm_model = load_model(paths["pm_model"])
        else:
            pm_model = roundtrip(train_bias(sp.train, cfg.estimator.bias_reg), paths["pm_model"])
            stamp("pm_model")
    return Prepared(log, sp, items, profiles, model, pm_model, paths, seeds)


def run_stages(cfg, out_dir, until, reuse=True):
    """Locked partial run that also refreshes the manifest."""
    with output_lock(out_dir):
        pre = prepare(cfg, out_dir, reuse, until)
        write_manifest(cfg, pre.seeds, pre.paths)
        return pre


def run_pipeline(cfg, out_dir, reuse=False, evaluate_results=True):
    """Execute the whole pipeline into ``out_dir``; returns :class:`RunArtifacts`.

    ``evaluate_results=False`` stops after writing recommendations (the
    returned ``report`` is then ``None``).
    """
    with output_lock(out_dir):
        pre = prepare(cfg, out_dir, reuse)
        sp, items, profiles, model, pm_model, paths = pre.split, pre.items, pre.profiles, pre.model, pre.pm_model, pre.paths
        with stage("recommend"):
            cache = unexpectedness_cache(profiles, items)
            rcfg = rec_config(cfg)
            recs = recommend_all(model, profiles, items, rcfg, cache)
            pm_recs = recommend_all(pm_model, profiles, items, replace(rcfg, alpha=0.0), cache)
            write_recommendations(recs, sp.train, paths["recommendations"])
        if not evaluate_results:
            write_manifest(cfg, pre.seeds, paths)
            return RunArtifacts(pre.log, sp, items, profiles, model, pm_model, recs, pm_recs, None, paths)
        with stage("evaluate"):
            report = evaluate(
                model, recs, pm_recs, profiles, items, sp.test,
                EvalConfig(cfg.eval.relevance_threshold, cfg.eval.n), rcfg.alpha,
                cfg.estimator.kind, cfg.closure.kind, cfg.run.seed,
            )
            write_reports([report], paths["report"])
        write_manifest(cfg, pre.seeds, paths)
        return RunArtifacts(pre.log, sp, items, profiles, model, pm_model, recs, pm_recs, report, paths)


def write_manifest(cfg, seeds, paths):
    artifacts = {k: _sha256(p) for k, p in paths.items() if k != "manifest" and p.exists()}
    manifest = {
        "config_hash": config_hash(cfg),
        "root_seed": cfg.run.seed,
        "stage_seeds": seeds,
        "config": serialize_config(cfg),
        "artifacts": artifacts,
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def config_from_manifest(path):
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = parse_config_text(manifest["config"])
    if config_hash(cfg) != manifest["config_hash"]:
        raise ValidationError("manifest config hash does not match its config text")
    return cfg


def run_sweep(cfg, out_dir, reuse=False):
    """Alpha sweep over ``eval.sweep_grid`` with a single trained estimator; writes sweep.csv."""
    with output_lock(out_dir):
        pre = prepare(cfg, out_dir, reuse)
        with stage("sweep"):
            table = sweep_alpha(
                cfg.eval.sweep_grid, pre.model, pre.pm_model, pre.profiles, pre.items, pre.split.test, rec_config(cfg),
                EvalConfig(cfg.eval.relevance_threshold, cfg.eval.n), cfg.estimator.kind, cfg.run.seed,
            )
            path = Path(out_dir) / "sweep.csv"
            write_sweep(table, path)
        return table, path


def robustness_matrix(cfg, estimators=("mf", "nmf", "knn"), closures=("sphere", "box", "hull"),
                      alphas=(0.0, 0.03), seeds=range(10)):
    """Reports for every (estimator, closure, alpha) over reruns with different root seeds.

    Returns ``{(estimator, closure): {alpha: [EvalReport, ...]}}``. Models and
    closure distances are shared across alphas within a rerun, as in a
    single trained system scored with different utility weights.
    """
    results = {(e, c): {a: [] for a in alphas} for e in estimators for c in closures}
    ecfg = EvalConfig(cfg.eval.relevance_threshold, cfg.eval.n)
    for seed in seeds:
        run_cfg = replace(cfg, run=replace(cfg.run, seed=int(seed)))
        sd = seeds_for(run_cfg)
        log, synth_table = load_data(run_cfg)
        sp = split_log(run_cfg, log, sd)
        item_table, _ = embed(run_cfg, sp.train, synth_table, sd)
        items = ItemSpace.from_table(item_table.quantized(), log.item_map)
        models = {e: train_model(run_cfg, sp.train, sd, e) for e in estimators}
        pm_model = train_bias(sp.train, cfg.estimator.bias_reg)
        for c in closures:
            ccfg = replace(run_cfg, closure=replace(run_cfg.closure, kind=c))
            profiles = make_profiles(ccfg, sp.train, items)
            cache = unexpectedness_cache(profiles, items)
            pm_recs = recommend_all(pm_model, profiles, items, rec_config(ccfg, 0.0), cache)
            for e in estimators:
                for a in alphas:
                    recs = recommend_all(models[e], profiles, items, rec_config(ccfg, a), cache)
                    results[(e, c)][a].append(
                        evaluate(models[e], recs, pm_recs, profiles, items, sp.test, ecfg, a, e, c, seed)
                    )
    return results


def significance(reports_a, reports_b, metrics=METRIC_COLUMNS):
    """Welch test per metric between two lists of reports; ``{metric: (t, p)}``.

    Metrics that are identical in both samples report ``(0.0, 1.0)``.
    """
    out = {}
    for m in metrics:
        a = [getattr(r, m) for r in reports_a]
        b = [getattr(r, m) for r in reports_b]
        try:
            out[m] = welch_t_test(a, b)
        except ValidationError:
            out[m] = (float("nan"), float("nan"))
    return out
