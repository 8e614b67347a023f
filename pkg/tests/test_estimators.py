import time

import numpy as np
import pytest

from latent_unexp.dataset import InteractionLog, split
from latent_unexp.errors import ConfigError, ValidationError
from latent_unexp.estimators import (
    BiasModel,
    KnnConfig,
    MfConfig,
    MfModel,
    item_similarities,
    load_model,
    roundtrip,
    save_model,
    train_bias,
    train_estimator,
    train_knn,
    train_mf,
    train_nmf,
)
from latent_unexp.evaluation import rmse_mae

from conftest import grid_log

NAN = np.nan


def planted(P, Q, mu=0.0, scale=(1.0, 5.0)):
    R = np.clip(mu + P @ Q.T, *scale)
    return grid_log(R, scale)


def planted_mf_log(seed=0):
    rng = np.random.default_rng(seed)
    return planted(rng.normal(0, 0.5, (200, 3)), rng.normal(0, 0.5, (100, 3)), mu=3.0)


def planted_nmf_log(seed=0):
    rng = np.random.default_rng(seed)
    return planted(rng.uniform(0.5, 1.5, (200, 2)), rng.uniform(0.5, 1.5, (100, 2)))


def knn_oracle(R, u, i, k):
    """Direct evaluation of the neighbourhood formula on a dense table with NaN gaps."""
    means = np.nanmean(R, axis=1)
    C = np.where(np.isnan(R), 0.0, R - means[:, None])
    norms = np.linalg.norm(C, axis=0)
    sims = {}
    for j in range(R.shape[1]):
        if j != i:
            den = norms[i] * norms[j]
            sims[j] = C[:, i] @ C[:, j] / den if den > 0 else 0.0
    top = sorted(sims, key=lambda j: (-sims[j], j))[:k]
    num = den = 0.0
    for j in top:
        if sims[j] > 0 and not np.isnan(R[u, j]):
            num += sims[j] * (R[u, j] - means[u])
            den += abs(sims[j])
    return means[u] + num / den if den > 0 else means[u]


class TestMf:
    def test_planted_rank3(self):
        sp = split(planted_mf_log(), 0.8, seed=0)
        t0 = time.perf_counter()
        model = train_mf(sp.train, MfConfig(k=8, lr=0.01, reg=0.01, epochs=50, seed=0))
        assert time.perf_counter() - t0 < 30
        assert rmse_mae(model, sp.test)[0] <= 0.1
        assert model.loss_history[-1] < model.loss_history[0]

    def test_constant_ratings(self):
        log = grid_log(np.full((20, 15), 4.0))
        model = train_mf(log, MfConfig(init_std=0.01))
        preds = model.predict_many(np.repeat(np.arange(20), 15), np.tile(np.arange(15), 20))
        np.testing.assert_allclose(preds, 4.0, atol=0.01)

    def test_unseen_user_fallback(self):
        R = np.array([[5, 3, NAN], [4, NAN, 1], [NAN, 2, 2.0]])
        log = grid_log(R)
        train = log.take(log.users != 2)
        model = train_mf(train, MfConfig(k=2, epochs=5))
        assert model.predict(2, 1) == pytest.approx(np.clip(model.mu + model.b_item[1], 1, 5))
        assert model.predict(99, 0) == pytest.approx(np.clip(model.mu + model.b_item[0], 1, 5))

    def test_zero_factors_is_bias_model(self):
        m = MfModel(3.0, [0.5, -0.5], [0.25, 0.0], np.zeros((2, 3)), np.zeros((2, 3)), (1, 5),
                    [True, True], [True, True])
        assert m.predict(0, 0) == 3.75
        assert m.predict(1, 1) == 2.5

    def test_deterministic(self):
        log = planted_mf_log(1)
        a = train_mf(log, MfConfig(k=4, epochs=3, seed=9))
        b = train_mf(log, MfConfig(k=4, epochs=3, seed=9))
        np.testing.assert_array_equal(a.P, b.P)
        np.testing.assert_array_equal(a.Q, b.Q)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            MfConfig(k=0)
        with pytest.raises(ConfigError):
            MfConfig(lr=0.0)


class TestNmf:
    def test_planted_rank2(self):
        sp = split(planted_nmf_log(), 0.8, seed=0)
        t0 = time.perf_counter()
        model = train_nmf(sp.train, MfConfig(k=2, lr=0.01, reg=0.0, epochs=100, seed=0))
        assert time.perf_counter() - t0 < 30
        assert rmse_mae(model, sp.test)[0] <= 0.15
        assert model.P.min() >= 0 and model.Q.min() >= 0

    def test_zero_ratings(self):
        log = grid_log(np.zeros((10, 8)), scale=(0.0, 5.0))
        model = train_nmf(log, MfConfig(k=3, epochs=30))
        assert np.abs(model.predict_many(np.arange(10), np.arange(10) % 8)).max() < 0.05

    def test_non_negative_every_epoch(self):
        log = planted_nmf_log(2)
        for epochs in (1, 2, 5):
            m = train_nmf(log, MfConfig(k=3, lr=0.05, epochs=epochs))
            assert m.P.min() >= 0 and m.Q.min() >= 0

    def test_rejects_negative_ratings(self):
        log = grid_log(np.array([[-1.0, 1.0]]), scale=(-2.0, 2.0))
        with pytest.raises(ValidationError):
            train_nmf(log)


class TestKnn:
    R = np.array([
        [5, 3, NAN, 1],
        [4, NAN, 4, 1],
        [1, 1, NAN, 5],
        [NAN, 1, 5, 4],
        [2, 4, 3, 1.0],
    ])

    def test_identical_columns(self):
        R = np.array([[5, 5, 1], [2, 2, 4], [4, 4, 2.0]])
        S, _ = item_similarities(grid_log(R))
        assert S[0, 1] == pytest.approx(1.0)
        assert train_knn(grid_log(R)).similarity(0, 1) == pytest.approx(1.0)

    def test_hand_fixture(self):
        log = grid_log(self.R)
        model = train_knn(log, KnnConfig(k_neighbors=2))
        col = log.item_map.index
        for u, i in [(0, 2), (2, 2), (3, 0), (1, 1), (4, 3)]:
            expected = np.clip(knn_oracle(self.R, u, i, 2), 1, 5)
            assert model.predict(u, col(f"i{i}")) == pytest.approx(expected, abs=1e-12)
        # user 1 on item 1: the only positive neighbour among the top two is item 0, rated 4
        assert model.predict(1, col("i1")) == pytest.approx(4.0)

    def test_single_rating_user_falls_back_to_mean(self):
        R = np.array([[4, NAN, NAN], [NAN, 5, 1], [NAN, 2, 4.0]])
        model = train_knn(grid_log(R))
        assert model.predict(0, 1) == pytest.approx(4.0)

    def test_similarity_symmetry_and_range(self):
        S, _ = item_similarities(planted_mf_log(3))
        np.testing.assert_allclose(S, S.T, atol=1e-9)
        assert np.abs(S).max() <= 1.0

    def test_neighbour_lists_sorted(self):
        model = train_knn(planted_mf_log(4), KnnConfig(k_neighbors=10))
        assert np.all(np.diff(model.neighbor_sims, axis=1) <= 0)


class TestBias:
    def test_single_rating_shrinks(self):
        log = InteractionLog.from_records([("a", "x", 3.0)])
        m = train_bias(log, reg=1.0)
        assert m.mu == 3.0
        assert m.b_item[0] == 0.0 and m.b_user[0] == 0.0
        log = InteractionLog.from_records([("a", "x", 3.0), ("b", "x", 5.0), ("a", "y", 1.0)])
        free, shrunk = train_bias(log, 0.0), train_bias(log, 5.0)
        assert np.all(np.abs(shrunk.b_item) < np.abs(free.b_item))

    def test_additive_2x2(self):
        # r = 2.5 + b_u + b_i with b_u = (-1, 1), b_i = (-0.5, 0.5)
        R = np.array([[1.0, 2.0], [3.0, 4.0]])
        m = train_bias(grid_log(R), reg=0.0)
        assert m.mu == 2.5
        np.testing.assert_allclose(m.b_user, [-1.0, 1.0])
        np.testing.assert_allclose(m.b_item, [-0.5, 0.5])
        for u in range(2):
            for i in range(2):
                assert m.predict(u, i) == pytest.approx(R[u, i])

    def test_clipping(self):
        m = BiasModel(4.5, [1.7], [0.0], (1, 5), [True], [True])
        assert m.predict(0, 0) == 5.0
        m = BiasModel(1.2, [-3.0], [0.0], (1, 5), [True], [True])
        assert m.predict(0, 0) == 1.0


class TestInterface:
    @pytest.mark.parametrize("kind", ["mf", "nmf", "knn", "bias"])
    def test_predictions_in_scale_and_pure(self, kind):
        log = planted_mf_log(5)
        model = train_estimator(kind, log, MfConfig(k=4, epochs=3), MfConfig(k=4, epochs=3))
        users = np.arange(-2, 205)
        items = np.arange(len(users)) % 103 - 1
        p = model.predict_many(users, items)
        assert np.all(np.isfinite(p)) and p.min() >= 1.0 and p.max() <= 5.0
        np.testing.assert_array_equal(p, model.predict_many(users, items))

    @pytest.mark.parametrize("kind", ["mf", "nmf", "knn", "bias"])
    def test_checkpoint(self, kind, tmp_path):
        log = planted_mf_log(6)
        model = train_estimator(kind, log, MfConfig(k=4, epochs=2), MfConfig(k=4, epochs=2))
        q = roundtrip(model, tmp_path / "m.lumd")
        save_model(model, tmp_path / "m2.lumd")
        loaded = load_model(tmp_path / "m2.lumd")
        assert loaded.kind == kind
        users, items = np.arange(200), np.arange(200) % 100
        np.testing.assert_array_equal(loaded.predict_many(users, items), q.predict_many(users, items))
        np.testing.assert_allclose(loaded.predict_many(users, items), model.predict_many(users, items), atol=1e-4)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            train_estimator("svdpp", planted_mf_log())
