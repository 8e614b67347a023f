import numpy as np
import pytest

from latent_unexp.dataset import (
    InteractionLog,
    build_hin,
    entity_node,
    filter_min_count,
    ingest_ratings,
    item_node,
    read_extra_edges,
    read_feature_table,
    split,
    user_node,
    write_ratings,
)
from latent_unexp.errors import EmptyDatasetError, ParseError, ValidationError
from latent_unexp.synthetic import SyntheticSpec, generate_synthetic


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def interned(log):
    """Surviving (user, item) pairs as string ids."""
    return {(log.user_map.id(u), log.item_map.id(i)) for u, i in zip(log.users.tolist(), log.items.tolist())}


class TestIngest:
    def test_header_and_values(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "user_id,item_id,rating\nalice,x,4\nbob,x,2.5\nalice,y,5\n")
        log = ingest_ratings(p, (1, 5), min_count=1)
        assert len(log) == 3
        assert (log.user_count, log.item_count) == (2, 2)
        assert log.rating_scale == (1.0, 5.0)
        np.testing.assert_array_equal(log.ratings, [4.0, 2.5, 5.0])
        assert not log.has_timestamps

    def test_headerless_with_timestamps(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "a,x,3,100\na,y,4,200\n")
        log = ingest_ratings(p, min_count=1)
        np.testing.assert_array_equal(log.timestamps, [100, 200])

    def test_min_count_five_survivors(self):
        log, _, _ = generate_synthetic(SyntheticSpec(n_users=60, n_items=40, interactions_per_user=6, seed=3))
        out = filter_min_count(log, 5)
        assert np.bincount(out.users).min() >= 5
        assert np.bincount(out.items).min() >= 5

    def test_everything_filtered(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "a,x,3\nb,y,3\nc,z,3\n")
        with pytest.raises(EmptyDatasetError):
            ingest_ratings(p, min_count=5)

    def test_chain_fixpoint(self):
        # C's single rating is dropped first; that leaves X with only A, so X goes too
        rows = [("A", "X", 4), ("A", "Y", 4), ("A", "Z", 3), ("B", "Y", 5), ("B", "Z", 2), ("C", "X", 1)]
        log = InteractionLog.from_records(rows, min_count=2)
        assert interned(log) == {("A", "Y"), ("A", "Z"), ("B", "Y"), ("B", "Z")}
        assert list(log.user_map) == ["A", "B"]
        assert list(log.item_map) == ["Y", "Z"]

    def test_filter_is_idempotent(self):
        log, _, _ = generate_synthetic(SyntheticSpec(seed=1))
        once = filter_min_count(log, 5)
        assert filter_min_count(once, 5).equals(once)

    def test_dense_indices(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "a,x,3\nb,y,3\na,y,3\nb,x,1\nc,x,2\n")
        log = ingest_ratings(p, min_count=2)
        assert set(log.users.tolist()) == set(range(log.user_count))
        assert set(log.items.tolist()) == set(range(log.item_count))

    def test_malformed_row_names_line(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "user_id,item_id,rating\na,x,4\nb,y\n")
        with pytest.raises(ParseError, match="line 3"):
            ingest_ratings(p, min_count=1)

    def test_non_numeric_rating(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "a,x,4\nb,y,good\n")
        with pytest.raises(ParseError, match="line 2"):
            ingest_ratings(p, min_count=1)

    def test_out_of_scale(self, tmp_path):
        p = write_csv(tmp_path / "r.csv", "a,x,4\nb,y,7\n")
        with pytest.raises(ValidationError, match="outside scale"):
            ingest_ratings(p, (1, 5), min_count=1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            ingest_ratings(tmp_path / "nope.csv")

    def test_duplicates_keep_latest(self):
        log = InteractionLog.from_records([("a", "x", 2, 50), ("a", "x", 5, 10), ("a", "y", 3, 20)], min_count=1)
        assert log.to_records()[0] == ("a", "x", 2.0, 50)
        log = InteractionLog.from_records([("a", "x", 2), ("a", "x", 5)], min_count=1)
        assert log.to_records() == [("a", "x", 5.0)]

    def test_write_then_ingest(self, tmp_path):
        log, _, _ = generate_synthetic(SyntheticSpec(seed=2))
        write_ratings(log, tmp_path / "r.csv")
        assert ingest_ratings(tmp_path / "r.csv", min_count=1).equals(log)


class TestSplit:
    @pytest.fixture
    def ten(self):
        return InteractionLog.from_records([(f"u{k % 2}", f"i{k}", 3.0) for k in range(10)])

    def test_counts(self, ten):
        sp = split(ten, 0.8, seed=7)
        assert (len(sp.train), len(sp.test)) == (8, 2)

    def test_deterministic(self, ten):
        a, b = split(ten, 0.8, 7), split(ten, 0.8, 7)
        assert a.train.equals(b.train) and a.test.equals(b.test)

    def test_seed_changes_test_set(self):
        log, _, _ = generate_synthetic(SyntheticSpec(n_users=100, n_items=50, interactions_per_user=10, seed=0))
        assert len(log) == 1000
        a, b = set(split(log, 0.8, 7).test.pairs()), set(split(log, 0.8, 8).test.pairs())
        assert len(a & b) / len(a | b) < 1.0

    def test_partition(self):
        log, _, _ = generate_synthetic(SyntheticSpec(seed=4))
        sp = split(log, 0.7, 3)
        tr, te = set(sp.train.pairs()), set(sp.test.pairs())
        assert not tr & te
        assert tr | te == set(log.pairs())
        assert set(sp.test.users.tolist()) <= set(sp.train.users.tolist())

    def test_test_only_user_is_moved_to_train(self):
        rows = [("a", f"i{k}", 3.0) for k in range(9)] + [("lonely", "i0", 4.0)]
        for seed in range(20):
            sp = split(InteractionLog.from_records(rows), 0.5, seed)
            assert set(sp.test.users.tolist()) <= set(sp.train.users.tolist())
            assert len(sp.train) + len(sp.test) == 10

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.2, 1.5])
    def test_bad_ratio(self, ten, ratio):
        with pytest.raises(ValidationError):
            split(ten, ratio)

    def test_temporal(self):
        day = 86400
        rows = [("a", "x", 3, 0), ("a", "y", 3, day), ("b", "x", 4, 5 * day), ("a", "z", 5, 10 * day)]
        sp = split(InteractionLog.from_records(rows), mode="temporal", test_days=2)
        assert sp.test.to_records() == [("a", "z", 5.0, 10 * day)]
        with pytest.raises(ValidationError):
            split(InteractionLog.from_records([("a", "x", 3)]), mode="temporal")


class TestHin:
    def test_shared_tag(self):
        log = InteractionLog.from_records([("u1", "i1", 4), ("u1", "i2", 3), ("u2", "i2", 5)])
        g = build_hin(log, [("u1", "tag", "jazz")], [("i2", "tag", "jazz")])
        assert len(g) == 5
        assert g.edge_counts == {"UI": 3, "UE": 1, "EI": 1}
        e = g.node_index[entity_node("tag", "jazz")]
        assert g.node_type(e) == "E"
        np.testing.assert_array_equal(
            g.neighbors(e), sorted([g.node_index[user_node("u1")], g.node_index[item_node("i2")]])
        )
        assert g.is_symmetric()

    def test_bipartite_without_features(self):
        log = InteractionLog.from_records([("a", "x", 4), ("b", "x", 3), ("b", "y", 5)])
        g = build_hin(log)
        assert g.edge_counts == {"UI": 3}
        assert {g.node_type(v) for v in range(len(g))} == {"U", "I"}

    def test_duplicate_assignment(self):
        log = InteractionLog.from_records(
            [("u1", "i1", 4), ("u2", "i2", 3), ("u3", "i3", 5), ("u1", "i2", 2)]
        )
        ufeat = [("u1", "city", "lyon"), ("u1", "city", "lyon"), ("u2", "city", "lyon")]
        ifeat = [("i1", "genre", "pop"), ("i1", "genre", "pop"), ("i3", "city", "lyon")]
        g = build_hin(log, ufeat, ifeat)
        assert len(g) == 8
        assert g.num_edges == 4 + 2 + 2
        assert g.edge_counts == {"UI": 4, "UE": 2, "EI": 2}
        assert len(g.edges()) == g.num_edges
        # namespacing keeps equal values in different columns apart
        g2 = build_hin(log, [("u1", "a", "v")], [("i1", "b", "v")])
        assert len(g2) == 8

    def test_edge_types_match_endpoints(self):
        log, _, _ = generate_synthetic(SyntheticSpec(n_users=20, n_items=10, interactions_per_user=4))
        g = build_hin(log, extra_edges=[("u0", "u1", "UU"), ("i0", "i1", "II")])
        assert g.is_symmetric()
        for v in range(len(g)):
            for t, nbrs in g.adjacency[v].items():
                assert all(g.node_type(w) == t for w in nbrs.tolist())
        assert g.edge_counts["UU"] == 1 and g.edge_counts["II"] == 1

    def test_dangling_feature(self):
        log = InteractionLog.from_records([("a", "x", 4)])
        with pytest.raises(ValidationError):
            build_hin(log, [("ghost", "c", "v")])

    def test_side_files(self, tmp_path):
        (tmp_path / "f.csv").write_text("id,column,value\na,city,paris\n", encoding="utf-8")
        (tmp_path / "e.tsv").write_text("src_id\tdst_id\tedge_type\na\tb\tUU\n", encoding="utf-8")
        assert read_feature_table(tmp_path / "f.csv") == [("a", "city", "paris")]
        assert read_extra_edges(tmp_path / "e.tsv") == [("a", "b", "UU")]
        (tmp_path / "bad.tsv").write_text("a\tb\tXX\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_extra_edges(tmp_path / "bad.tsv")
