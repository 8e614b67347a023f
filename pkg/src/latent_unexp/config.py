"""Run configuration: a plain ``section.key = value`` text format.

Every key has a typed default; parsing rejects unknown keys and invalid
enumerations, and :func:`serialize_config` writes every value back out so a
run's full configuration is always materialized.
"""
from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

ENUMS = {
    ("data", "source"): ("file", "synthetic"),
    ("data", "split_mode"): ("random", "temporal"),
    ("embedding", "method"): ("hine", "ae", "load", "synthetic"),
    ("estimator", "kind"): ("mf", "nmf", "knn"),
    ("closure", "kind"): ("sphere", "box", "hull"),
}


@dataclass(frozen=True)
class DataSection:
    source: str = "file"
    ratings: str = ""
    user_features: str = ""
    item_features: str = ""
    edges: str = ""
    scale_min: float = 1.0
    scale_max: float = 5.0
    min_count: int = 5
    split_ratio: float = 0.8
    split_mode: str = "random"
    test_days: float = 1.0


@dataclass(frozen=True)
class SynthSection:
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
    factor_std: float = 0.3
    mu: float = 3.8
    seed: int = 0


@dataclass(frozen=True)
class EmbeddingSection:
    method: str = "hine"
    dim: int = 128
    path: str = ""


@dataclass(frozen=True)
class WalkSection:
    walk_length: int = 100
    walks_per_node: int = 10
    c_uu: float = 1.0
    c_ue: float = 1.0
    c_ui: float = 1.0
    c_ei: float = 1.0
    c_ee: float = 1.0
    c_ii: float = 1.0
    metapath: str = ""


@dataclass(frozen=True)
class SkipGramSection:
    window: int = 2
    min_count: int = 1
    iterations: int = 100
    negatives: int = 5
    learning_rate: float = 0.025


@dataclass(frozen=True)
class AutoencoderSection:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 64


@dataclass(frozen=True)
class EstimatorSection:
    kind: str = "mf"
    k: int = 32
    lr: float = 0.005
    reg: float = 0.02
    epochs: int = 30
    nmf_k: int = 15
    nmf_lr: float = 0.01
    nmf_reg: float = 0.02
    nmf_epochs: int = 50
    knn_k: int = 40
    bias_reg: float = 0.0


@dataclass(frozen=True)
class ClosureSection:
    kind: str = "hull"
    tol: float = 1e-8
    enclosing_sphere: bool = True


@dataclass(frozen=True)
class RecommenderSection:
    alpha: float = 0.03
    top_n: int = 5
    cold_start_threshold: int = 5
    positive_only: bool = False


@dataclass(frozen=True)
class EvalSection:
    relevance_threshold: float = 4.0
    n: int = 5
    sweep_grid: tuple = tuple(round(0.01 * k, 2) for k in range(11))
    significance_runs: int = 10


@dataclass(frozen=True)
class RunSection:
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    walk: WalkSection = field(default_factory=WalkSection)
    skipgram: SkipGramSection = field(default_factory=SkipGramSection)
    autoencoder: AutoencoderSection = field(default_factory=AutoencoderSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    closure: ClosureSection = field(default_factory=ClosureSection)
    recommender: RecommenderSection = field(default_factory=RecommenderSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    def with_values(self, **dotted):
        """Copy with ``section__key=value`` overrides (validated)."""
        return override(self, {k.replace("__", "."): v for k, v in dotted.items()})


SECTIONS = tuple(f.name for f in fields(RunConfig))


def _coerce(section, key, default, raw):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if isinstance(default, tuple):
        if isinstance(raw, (list, tuple)):
            items = raw
        else:
            items = [s for s in str(raw).split(",") if s.strip()]
        try:
            return tuple(float(s) for s in items)
        except ValueError:
            raise ConfigError(f"{where}: expected comma-separated numbers, got {raw!r}") from None
    return str(raw).strip()


def validate(cfg):
    for (section, key), allowed in ENUMS.items():
        val = getattr(getattr(cfg, section), key)
        if val not in allowed:
            raise ConfigError(f"{section}.{key}={val!r} is invalid; valid values: {', '.join(allowed)}")
    r = cfg.recommender
    if not (np.isfinite(r.alpha) and r.alpha >= 0):
        raise ConfigError(f"recommender.alpha must be >= 0, got {r.alpha}")
    if r.top_n < 1:
        raise ConfigError("recommender.top_n must be >= 1")
    if r.cold_start_threshold < 0:
        raise ConfigError("recommender.cold_start_threshold must be >= 0")
    d = cfg.data
    if not 0 < d.split_ratio < 1:
        raise ConfigError("data.split_ratio must lie in (0, 1)")
    if d.scale_min > d.scale_max:
        raise ConfigError("data.scale_min must not exceed data.scale_max")
    if d.min_count < 1:
        raise ConfigError("data.min_count must be >= 1")
    if cfg.embedding.dim < 1:
        raise ConfigError("embedding.dim must be >= 1")
    w = cfg.walk
    if w.walk_length < 1 or w.walks_per_node < 1:
        raise ConfigError("walk.walk_length and walk.walks_per_node must be >= 1")
    coefs = [w.c_uu, w.c_ue, w.c_ui, w.c_ei, w.c_ee, w.c_ii]
    if any(c < 0 for c in coefs) or all(c == 0 for c in coefs):
        raise ConfigError("walk coefficients must be >= 0 and not all zero")
    if w.metapath and any(t not in "UIE" for t in w.metapath):
        raise ConfigError("walk.metapath must be a string over U, I, E")
    s = cfg.skipgram
    if s.window < 1 or s.negatives < 1 or s.iterations < 1:
        raise ConfigError("skipgram.window, negatives and iterations must be >= 1")
    if cfg.closure.tol <= 0:
        raise ConfigError("closure.tol must be positive")
    grid = cfg.eval.sweep_grid
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("eval.sweep_grid must be strictly increasing")
    if cfg.eval.n < 1:
        raise ConfigError("eval.n must be >= 1")
    if cfg.eval.significance_runs < 2:
        raise ConfigError("eval.significance_runs must be >= 2")
    return cfg


def check_paths(cfg):
    """Referenced input files must exist."""
    need = []
    if cfg.data.source == "file":
        if not cfg.data.ratings:
            raise ConfigError("data.ratings is required when data.source = file")
        need.append(("data.ratings", cfg.data.ratings))
    for key in ("user_features", "item_features", "edges"):
        val = getattr(cfg.data, key)
        if val:
            need.append((f"data.{key}", val))
    if cfg.embedding.method == "load":
        if not cfg.embedding.path:
            raise ConfigError("embedding.path is required when embedding.method = load")
        need.append(("embedding.path", cfg.embedding.path))
    if cfg.embedding.method == "synthetic" and cfg.data.source != "synthetic":
        raise ConfigError("embedding.method = synthetic requires data.source = synthetic")
    for key, p in need:
        if not Path(p).exists():
            raise ConfigError(f"{key}: file not found: {p}")
    return cfg


def override(cfg, values):
    """Apply ``{"section.key": value}`` overrides."""
    sections = {name: getattr(cfg, name) for name in SECTIONS}
    updates = {name: {} for name in SECTIONS}
    for dotted, raw in values.items():
        if "." not in dotted:
            raise ConfigError(f"unknown key {dotted!r}: expected section.key")
        section, key = dotted.split(".", 1)
        if section not in sections:
            raise ConfigError(f"unknown section {section!r} in key {dotted!r}; valid sections: {', '.join(SECTIONS)}")
        known = {f.name: getattr(sections[section], f.name) for f in fields(sections[section])}
        if key not in known:
            raise ConfigError(f"unknown key {dotted!r}")
        updates[section][key] = _coerce(section, key, known[key], raw)
    new = RunConfig(**{name: replace(sections[name], **updates[name]) for name in SECTIONS})
    return validate(new)


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return override(RunConfig(), values)


def parse_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg):
    lines = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        for f in fields(section):
            lines.append(f"{name}.{f.name} = {_render(getattr(section, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


def child_seed(root, stage):
    """Per-stage seed: ``SeedSequence([root, crc32(stage)])``'s first 32-bit word."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(stage.encode("utf-8"))])
    return int(ss.generate_state(1)[0])
