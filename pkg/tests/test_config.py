import numpy as np
import pytest

from latent_unexp.config import (
    RunConfig,
    check_paths,
    child_seed,
    config_hash,
    override,
    parse_config,
    parse_config_text,
    serialize_config,
)
from latent_unexp.errors import ConfigError


class TestParse:
    def test_empty_file_gives_defaults(self, tmp_path):
        (tmp_path / "c.conf").write_text("", encoding="utf-8")
        cfg = parse_config(tmp_path / "c.conf")
        assert cfg == RunConfig()
        assert cfg.recommender.alpha == 0.03
        assert cfg.embedding.dim == 128
        assert cfg.walk.walk_length == 100
        assert cfg.skipgram.window == 2

    def test_values_and_comments(self):
        cfg = parse_config_text("# a run\nrecommender.alpha = 0.1  # larger\nestimator.kind = knn\nclosure.enclosing_sphere = no\n")
        assert cfg.recommender.alpha == 0.1
        assert cfg.estimator.kind == "knn"
        assert cfg.closure.enclosing_sphere is False

    def test_negative_alpha(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config_text("recommender.alpha = -1")

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="recommender.beta"):
            parse_config_text("recommender.beta = 1")

    def test_bad_enum_lists_values(self):
        with pytest.raises(ConfigError, match="mf, nmf, knn"):
            parse_config_text("estimator.kind = ncf")

    def test_type_errors(self):
        with pytest.raises(ConfigError):
            parse_config_text("recommender.top_n = five")
        with pytest.raises(ConfigError):
            parse_config_text("no equals sign here")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("run.seed = 1\nrun.seed = 2")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.conf")

    def test_roundtrip(self):
        cfg = override(RunConfig(), {"recommender.alpha": "0.07", "eval.sweep_grid": "0,0.05,0.1",
                                      "walk.metapath": "UIU", "synth.shared_home": "false"})
        again = parse_config_text(serialize_config(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)
        assert config_hash(cfg) != config_hash(RunConfig())

    def test_sweep_grid_default(self):
        grid = RunConfig().eval.sweep_grid
        assert len(grid) == 11
        np.testing.assert_allclose(grid, np.linspace(0, 0.1, 11))


class TestPaths:
    def test_ratings_required(self):
        with pytest.raises(ConfigError, match="data.ratings"):
            check_paths(RunConfig())

    def test_missing_file(self, tmp_path):
        cfg = override(RunConfig(), {"data.ratings": str(tmp_path / "nope.csv")})
        with pytest.raises(ConfigError, match="not found"):
            check_paths(cfg)

    def test_synthetic_needs_no_files(self):
        cfg = override(RunConfig(), {"data.source": "synthetic", "embedding.method": "synthetic"})
        assert check_paths(cfg) is cfg


class TestSeeds:
    def test_stable_and_distinct(self):
        assert child_seed(0, "split") == child_seed(0, "split")
        seeds = {child_seed(r, s) for r in range(5) for s in ("split", "embed", "estimator", "pm")}
        assert len(seeds) == 20
