import numpy as np
import pytest
from scipy import stats

from latent_unexp.closure import build_closure
from latent_unexp.dataset import InteractionLog
from latent_unexp.errors import ValidationError
from latent_unexp.evaluation import (
    EvalConfig,
    EvalReport,
    SweepTable,
    diversity,
    evaluate,
    intra_list_distance,
    mean_unexpectedness,
    precision_recall_at_n,
    read_reports,
    rmse_mae,
    serendipity,
    student_t_sf2,
    sweep_alpha,
    welch_t_test,
    write_reports,
    write_sweep,
)
from latent_unexp.recommender import ItemSpace, RecommenderConfig, UserProfile, build_profiles

from test_recommender import clustered_world, flat_model


class FixedModel:
    """Predicts a stored value per (user, item) pair."""

    def __init__(self, table):
        self.table = table

    def predict_many(self, users, items):
        return np.array([self.table[(u, i)] for u, i in zip(users.tolist(), items.tolist())])


def make_log(rows):
    return InteractionLog.from_records(rows)


class TestAccuracy:
    @pytest.fixture
    def log(self):
        return make_log([("a", "x", 4.0), ("a", "y", 2.0), ("b", "x", 3.0), ("b", "z", 5.0)])

    def pairs(self, log, offsets):
        return FixedModel({(u, i): r + d for u, i, r, d in zip(log.users.tolist(), log.items.tolist(),
                                                                 log.ratings.tolist(), offsets)})

    def test_perfect(self, log):
        assert rmse_mae(self.pairs(log, [0, 0, 0, 0]), log) == (0.0, 0.0)

    def test_constant_error(self, log):
        assert rmse_mae(self.pairs(log, [1, 1, 1, 1]), log) == pytest.approx((1.0, 1.0))

    def test_hand_fixture(self, log):
        rmse, mae = rmse_mae(self.pairs(log, [0.5, -0.5, 1.0, 0.0]), log)
        assert rmse == pytest.approx(np.sqrt(1.5 / 4), abs=1e-12)
        assert rmse == pytest.approx(0.61237, abs=1e-5)
        assert mae == pytest.approx(0.5, abs=1e-12)

    def test_empty(self, log):
        with pytest.raises(ValidationError):
            rmse_mae(self.pairs(log, [0] * 4), log.take(np.zeros(4, bool)))


class TestRanking:
    def test_all_relevant(self):
        log = make_log([("u", f"i{k}", 5.0) for k in range(10)])
        p, r = precision_recall_at_n({0: list(range(5))}, log, 4.0, 5)
        assert (p, r) == (1.0, 0.5)

    def test_no_overlap(self):
        log = make_log([("u", "x", 5.0)])
        assert precision_recall_at_n({0: [7, 8, 9, 10, 11]}, log, 4.0, 5) == (0.0, 0.0)

    def test_three_users(self):
        rows = [("u0", c, 5.0) for c in "abx"] + [("u1", "f", 4.0)] + [("u2", c, 4.5) for c in "abcdefgh"]
        rows += [("u3", "a", 2.0)]
        log = make_log(rows)
        idx = lambda c: log.item_map.get(c, 1000 + ord(c))  # noqa: E731
        top = [idx(c) for c in "abcde"]
        recs = {0: top, 1: top, 2: top, 3: top}
        p, r = precision_recall_at_n(recs, log, 4.0, 5)
        # u3 has no relevant item and is skipped
        assert p == pytest.approx((0.4 + 0.0 + 1.0) / 3, abs=1e-12)
        assert r == pytest.approx((2 / 3 + 0.0 + 5 / 8) / 3, abs=1e-12)


class TestUnexpectedness:
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [3.0, 0.0], [0.0, -2.0]])

    def profiles(self):
        prof = lambda u, c, kind: UserProfile(u, np.array(c), build_closure(kind, self.V[c]))  # noqa: E731
        return {0: prof(0, [0, 1, 2], "hull"), 1: prof(1, [0, 1], "sphere")}

    def test_two_by_two(self):
        recs = {0: [3, 4], 1: [4, 5]}
        expected = [np.sqrt(2) / 2, 2.0, 2.0, np.hypot(0.5, 2.0) - 0.5]
        got = mean_unexpectedness(recs, self.profiles(), ItemSpace(self.V))
        assert got == pytest.approx(np.mean(expected), abs=1e-8)

    def test_inside(self):
        assert mean_unexpectedness({0: [0, 1], 1: [1]}, self.profiles(), ItemSpace(self.V)) == 0.0

    def test_single(self):
        assert mean_unexpectedness({0: [4]}, self.profiles(), ItemSpace(self.V)) == pytest.approx(2.0)


class TestSerendipity:
    def test_set_enumeration(self):
        a, b, c, d, e, x, y, z = range(8)
        s = serendipity({0: [a, b, c, d, e]}, {0: [a, b, x, y, z]}, {(0, a), (0, c), (0, d)})
        assert s == pytest.approx(0.4, abs=1e-12)

    def test_primitive_superset(self):
        assert serendipity({0: [1, 2]}, {0: [1, 2, 3]}, {(0, 1), (0, 2)}) == 0.0

    def test_nothing_useful(self):
        assert serendipity({0: [1, 2]}, {0: [5]}, set()) == 0.0

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            recs = {u: rng.choice(20, 5, replace=False).tolist() for u in range(5)}
            pm = {u: rng.choice(20, 5, replace=False).tolist() for u in range(5)}
            useful = {(u, int(i)) for u in range(5) for i in rng.choice(20, 8)}
            assert 0.0 <= serendipity(recs, pm, useful) <= 1.0


class TestDiversity:
    def test_orthogonal(self):
        assert diversity({0: [0, 1]}, ItemSpace(np.eye(2))) == pytest.approx(1.0, abs=1e-12)

    def test_identical(self):
        assert diversity({0: [0, 1]}, ItemSpace([[0.3, 0.4], [0.3, 0.4]])) == pytest.approx(0.0, abs=1e-12)

    def test_mixed_cosines(self):
        V = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        assert diversity({0: [0, 1, 2]}, ItemSpace(V)) == pytest.approx(2 / 3, abs=1e-12)

    def test_zero_norm_counted(self):
        d, bad = diversity({0: [0, 1], 1: [2]}, ItemSpace([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), True)
        assert (d, bad) == (1.0, 1)

    def test_range(self):
        V = np.random.default_rng(1).normal(size=(6, 4))
        d, _ = intra_list_distance(V)
        assert 0.0 <= d <= 2.0


class TestWelch:
    def test_identical(self):
        assert welch_t_test([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)

    def test_unit_shift(self):
        t, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0, abs=1e-12)
        ref = stats.ttest_ind([1, 2, 3, 4, 5], [2, 3, 4, 5, 6], equal_var=False)
        assert p == pytest.approx(ref.pvalue, abs=1e-10)
        assert p == pytest.approx(0.3466, abs=1e-4)
        assert student_t_sf2(1.0, 8.0) == pytest.approx(2 * stats.t.sf(1.0, 8), abs=1e-12)

    def test_large_shift(self):
        b = np.random.default_rng(2).normal(size=10)
        assert welch_t_test(b + 5.0, b)[1] < 0.05

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=7), rng.normal(0.5, 2.0, size=9)
        ta, pa = welch_t_test(a, b)
        tb, pb = welch_t_test(b, a)
        assert ta == -tb and pa == pytest.approx(pb, abs=1e-15)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert (ta, pa) == pytest.approx((ref.statistic, ref.pvalue), abs=1e-10)

    def test_undersized(self):
        with pytest.raises(ValidationError):
            welch_t_test([1.0], [2.0, 3.0])


class TestReports:
    @pytest.fixture
    def world(self):
        log, items = clustered_world(20, seed=4)
        rng = np.random.default_rng(4)
        model = flat_model(log.user_count, rng.normal(scale=0.05, size=log.item_count), mu=3.5)
        pm = flat_model(log.user_count, np.zeros(log.item_count))
        profiles = build_profiles(log, items)
        test = InteractionLog(
            log.users[:30], log.items[:30], np.full(30, 4.5), log.user_map, log.item_map, log.rating_scale
        )
        return model, pm, profiles, items, test

    def test_rmse_independent_of_alpha(self, world):
        model, pm, profiles, items, test = world
        table = sweep_alpha([0.0, 0.01, 0.03, 0.1], model, pm, profiles, items, test, estimator="bias", seed=9)
        assert len(set(table.column("rmse").tolist())) == 1
        assert len(set(table.column("mae").tolist())) == 1
        assert np.all(np.diff(table.column("unexp")) >= 0)
        _, r = table.rows[2]
        assert (r.alpha, r.estimator, r.closure, r.seed, r.n) == (0.03, "bias", "hull", 9, 5)

    def test_eleven_rows(self, world, tmp_path):
        model, pm, profiles, items, test = world
        grid = [round(0.01 * k, 2) for k in range(11)]
        table = sweep_alpha(grid, model, pm, profiles, items, test)
        write_sweep(table, tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "alpha,RMSE,MAE,Pre@N,Rec@N,Unexp,Ser,Div"
        assert len(lines) == 12

    def test_grid_must_increase(self, world):
        with pytest.raises(ValidationError):
            sweep_alpha([0.0, 0.0], *world)
        with pytest.raises(ValidationError):
            SweepTable(((0.1, None), (0.05, None)))

    def test_evaluate_echo_and_csv(self, world, tmp_path):
        model, pm, profiles, items, test = world
        from latent_unexp.recommender import recommend_all

        recs = recommend_all(model, profiles, items, RecommenderConfig(alpha=0.03))
        pm_recs = recommend_all(pm, profiles, items, RecommenderConfig(alpha=0.0))
        rep = evaluate(model, recs, pm_recs, profiles, items, test, EvalConfig(4.0, 5), 0.03, "mf", "hull", 3)
        assert isinstance(rep, EvalReport)
        assert (rep.alpha, rep.estimator, rep.closure, rep.seed) == (0.03, "mf", "hull", 3)
        assert 0 <= rep.precision_at_n <= 1 and 0 <= rep.recall_at_n <= 1 and 0 <= rep.serendipity <= 1
        write_reports([rep, rep], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("RMSE,MAE,Pre@N,Rec@N,Unexp,Ser,Div,")
        assert read_reports(tmp_path / "r.csv") == [rep, rep]
