"""Rating logs, train/test splits and the heterogeneous information network.

Identifiers read from files are strings; everything downstream works on
dense integer indices assigned in order of first appearance.
"""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, ParseError, ValidationError

NODE_TYPES = ("U", "I", "E")
EDGE_TYPES = ("UU", "UE", "UI", "EI", "EE", "II")
_TYPE_CODE = {t: k for k, t in enumerate(NODE_TYPES)}


def edge_type_name(a, b):
    """Canonical relation name for an (unordered) pair of node types."""
    pair = {a, b}
    for name in EDGE_TYPES:
        if set(name) == pair:
            return name
    raise ValidationError(f"unknown node types {a!r}, {b!r}")


class IdMap:
    """Bidirectional string <-> dense index table."""

    def __init__(self, ids=()):
        self._ids = list(ids)
        self._index = {s: k for k, s in enumerate(self._ids)}
        if len(self._index) != len(self._ids):
            raise ValidationError("duplicate identifiers in id map")

    def __len__(self):
        return len(self._ids)

    def __contains__(self, key):
        return key in self._index

    def __iter__(self):
        return iter(self._ids)

    def __eq__(self, other):
        return isinstance(other, IdMap) and self._ids == other._ids

    def __repr__(self):
        return f"IdMap({len(self)} ids)"

    def index(self, key):
        return self._index[key]

    def get(self, key, default=None):
        return self._index.get(key, default)

    def id(self, idx):
        return self._ids[idx]

    @property
    def ids(self):
        return tuple(self._ids)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class InteractionLog:
    """Index-interned (user, item, rating[, timestamp]) records.

    Train and test views produced by :func:`split` share the id maps and
    entity counts of the log they came from, so indices are comparable
    across views.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_map: IdMap
    item_map: IdMap
    rating_scale: tuple
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "users", _frozen(self.users, np.int64))
        object.__setattr__(self, "items", _frozen(self.items, np.int64))
        object.__setattr__(self, "ratings", _frozen(self.ratings, np.float64))
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))
        object.__setattr__(self, "rating_scale", (float(self.rating_scale[0]), float(self.rating_scale[1])))
        n = len(self.users)
        if len(self.items) != n or len(self.ratings) != n:
            raise ValidationError("users, items and ratings must have equal length")
        if self.timestamps is not None and len(self.timestamps) != n:
            raise ValidationError("timestamps must match the number of interactions")

    def __len__(self):
        return len(self.users)

    @property
    def user_count(self):
        return len(self.user_map)

    @property
    def item_count(self):
        return len(self.item_map)

    @property
    def has_timestamps(self):
        return self.timestamps is not None

    def pairs(self):
        return set(zip(self.users.tolist(), self.items.tolist()))

    def take(self, mask_or_index):
        """Sub-view over selected rows, sharing id maps and scale."""
        sel = np.asarray(mask_or_index)
        return InteractionLog(
            self.users[sel],
            self.items[sel],
            self.ratings[sel],
            self.user_map,
            self.item_map,
            self.rating_scale,
            None if self.timestamps is None else self.timestamps[sel],
        )

    def items_by_user(self):
        """Dict user index -> sorted array of item indices."""
        out = defaultdict(list)
        for u, i in zip(self.users.tolist(), self.items.tolist()):
            out[u].append(i)
        return {u: np.array(sorted(v), dtype=np.int64) for u, v in out.items()}

    def ratings_by_user(self):
        """Dict user index -> {item index: rating}."""
        out = defaultdict(dict)
        for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()):
            out[u][i] = r
        return dict(out)

    def equals(self, other):
        """Bit-level equality of contents (not identity)."""
        same_ts = (self.timestamps is None and other.timestamps is None) or (
            self.timestamps is not None
            and other.timestamps is not None
            and np.array_equal(self.timestamps, other.timestamps)
        )
        return (
            np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and self.user_map == other.user_map
            and self.item_map == other.item_map
            and self.rating_scale == other.rating_scale
            and same_ts
        )

    @classmethod
    def from_records(cls, records, scale=(1.0, 5.0), min_count=1):
        """Build a filtered, interned log from ``(user_id, item_id, rating[, ts])`` tuples.

        Duplicate (user, item) pairs keep the latest timestamp, or the last
        occurrence when timestamps are absent.
        """
        lo, hi = float(scale[0]), float(scale[1])
        if not lo <= hi:
            raise ValidationError(f"invalid rating scale {scale!r}")
        latest = {}
        with_ts = None
        for pos, rec in enumerate(records):
            u, i, r = str(rec[0]), str(rec[1]), float(rec[2])
            ts = int(rec[3]) if len(rec) > 3 and rec[3] is not None else None
            if with_ts is None:
                with_ts = ts is not None
            elif with_ts != (ts is not None):
                raise ValidationError("timestamps must be given for all records or none")
            if not (lo <= r <= hi) or math.isnan(r):
                raise ValidationError(f"rating {r} outside scale [{lo}, {hi}]")
            key = (u, i)
            prev = latest.get(key)
            if prev is None or ts is None or ts >= prev[1]:
                latest[key] = (pos, ts, r)
        rows = sorted(((pos, u, i, r, ts) for (u, i), (pos, ts, r) in latest.items()))
        rows = _fixpoint_filter(rows, min_count)
        if not rows:
            raise EmptyDatasetError(f"no interactions survive min_count={min_count}")
        umap = IdMap(dict.fromkeys(row[1] for row in rows))
        imap = IdMap(dict.fromkeys(row[2] for row in rows))
        return cls(
            [umap.index(row[1]) for row in rows],
            [imap.index(row[2]) for row in rows],
            [row[3] for row in rows],
            umap,
            imap,
            (lo, hi),
            [row[4] for row in rows] if with_ts else None,
        )

    def to_records(self):
        out = []
        for k in range(len(self)):
            rec = (self.user_map.id(int(self.users[k])), self.item_map.id(int(self.items[k])), float(self.ratings[k]))
            if self.timestamps is not None:
                rec = rec + (int(self.timestamps[k]),)
            out.append(rec)
        return out


def _fixpoint_filter(rows, min_count):
    while True:
        ucount = Counter(row[1] for row in rows)
        icount = Counter(row[2] for row in rows)
        kept = [row for row in rows if ucount[row[1]] >= min_count and icount[row[2]] >= min_count]
        if len(kept) == len(rows):
            return kept
        rows = kept


def filter_min_count(log, min_count):
    """Re-apply the frequency filter to an existing log (re-interning indices)."""
    return InteractionLog.from_records(log.to_records(), log.rating_scale, min_count)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_ratings_rows(path):
    """Parse a ratings CSV into raw tuples, validating shape row by row."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"ratings file not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            row = [c.strip() for c in row]
            if lineno == 1 and len(row) >= 3 and not _is_number(row[2]):
                continue  # header
            if len(row) not in (3, 4):
                raise ParseError(f"expected 3 or 4 columns, got {len(row)}", lineno)
            if not row[0] or not row[1]:
                raise ParseError("empty user or item id", lineno)
            try:
                rating = float(row[2])
            except ValueError:
                raise ParseError(f"rating {row[2]!r} is not a number", lineno) from None
            if len(row) == 4:
                try:
                    ts = int(row[3])
                except ValueError:
                    raise ParseError(f"timestamp {row[3]!r} is not an integer", lineno) from None
                rows.append((row[0], row[1], rating, ts, lineno))
            else:
                rows.append((row[0], row[1], rating, None, lineno))
    return rows


def ingest_ratings(path, scale=(1.0, 5.0), min_count=5):
    """Read, validate and frequency-filter a ratings CSV.

    Columns are ``user_id,item_id,rating[,timestamp]``; a header row is
    detected by a non-numeric rating field. Filtering is repeated until no
    user or item falls below ``min_count``.
    """
    lo, hi = float(scale[0]), float(scale[1])
    raw = read_ratings_rows(path)
    for u, i, r, ts, lineno in raw:
        if not (lo <= r <= hi):
            raise ValidationError(f"line {lineno}: rating {r} outside scale [{lo}, {hi}]")
    if raw and len({ts is None for *_, ts, _ in raw}) > 1:
        raise ParseError("timestamps must be present on every row or none")
    return InteractionLog.from_records([(u, i, r, ts) for u, i, r, ts, _ in raw], (lo, hi), min_count)


def write_ratings(log, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["user_id", "item_id", "rating"] + (["timestamp"] if log.has_timestamps else [])
        w.writerow(header)
        for rec in log.to_records():
            w.writerow([rec[0], rec[1], repr(rec[2])] + ([rec[3]] if len(rec) > 3 else []))


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: InteractionLog
    test: InteractionLog
    seed: int
    ratio: float


def _ensure_train_users(log, is_test, order):
    # a user whose rows all landed in test gets its first row (in shuffled order) back
    train_users = set(log.users[~is_test].tolist())
    for k in order:
        u = int(log.users[k])
        if is_test[k] and u not in train_users:
            is_test[k] = False
            train_users.add(u)
    return is_test


def split(log, ratio=0.8, seed=0, mode="random", test_days=1):
    """Partition a log into train/test views.

    ``mode="random"`` draws a uniform random subset of ``round(ratio * n)``
    rows for training. ``mode="temporal"`` puts every interaction in the
    final ``test_days`` days (relative to the newest timestamp) into test
    and ignores ``ratio``. In both modes any test user without a training
    row has one row moved to train, so train and test always partition the
    log.
    """
    if mode == "random":
        if not 0.0 < ratio < 1.0:
            raise ValidationError(f"ratio must lie in (0, 1), got {ratio}")
        n = len(log)
        rng = np.random.default_rng(seed)
        order = rng.permutation(n)
        n_train = int(math.floor(ratio * n + 0.5))
        is_test = np.zeros(n, dtype=bool)
        is_test[order[n_train:]] = True
    elif mode == "temporal":
        if not log.has_timestamps:
            raise ValidationError("temporal split requires timestamps")
        if test_days <= 0:
            raise ValidationError("test_days must be positive")
        cutoff = int(log.timestamps.max()) - int(test_days * 86400)
        is_test = log.timestamps > cutoff
        order = np.lexsort((np.arange(len(log)), log.timestamps))
    else:
        raise ValidationError(f"unknown split mode {mode!r}; expected 'random' or 'temporal'")
    is_test = _ensure_train_users(log, is_test.copy(), order)
    return SplitPair(log.take(~is_test), log.take(is_test), seed, ratio)


@dataclass(frozen=True, eq=False)
class HinGraph:
    """Undirected typed graph over users (U), items (I) and entities (E).

    ``adjacency[v]`` maps a neighbor type to the sorted array of neighbor
    node indices of that type.
    """

    node_ids: tuple
    node_types: np.ndarray
    adjacency: tuple
    edge_counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.node_ids)

    @property
    def node_index(self):
        return {s: k for k, s in enumerate(self.node_ids)}

    def node_type(self, v):
        return NODE_TYPES[int(self.node_types[v])]

    def neighbors(self, v, node_type=None):
        adj = self.adjacency[v]
        if node_type is not None:
            return adj.get(node_type, np.empty(0, dtype=np.int64))
        if not adj:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(list(adj.values())))

    def edges(self):
        """Set of undirected edges as (min, max) index pairs."""
        out = set()
        for v, adj in enumerate(self.adjacency):
            for nbrs in adj.values():
                for w in nbrs.tolist():
                    out.add((min(v, w), max(v, w)))
        return out

    @property
    def num_edges(self):
        return sum(self.edge_counts.values())

    def is_symmetric(self):
        for v, adj in enumerate(self.adjacency):
            for nbrs in adj.values():
                for w in nbrs.tolist():
                    back = self.adjacency[w].get(self.node_type(v))
                    if back is None or v not in set(back.tolist()):
                        return False
        return True


def user_node(uid):
    return f"U:{uid}"


def item_node(iid):
    return f"I:{iid}"


def entity_node(column, value):
    return f"E:{column}={value}"


def read_feature_table(path):
    """Long-form feature CSV (``id,column,value``) as a list of tuples."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            row = [c.strip() for c in row]
            if lineno == 1 and row[:3] == ["id", "column", "value"]:
                continue
            if len(row) != 3:
                raise ParseError(f"expected id,column,value, got {len(row)} columns", lineno)
            rows.append(tuple(row))
    return rows


def read_extra_edges(path):
    """TSV of ``src_id  dst_id  edge_type`` rows."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("\t")]
            if lineno == 1 and parts == ["src_id", "dst_id", "edge_type"]:
                continue
            if len(parts) != 3:
                raise ParseError("expected src_id<TAB>dst_id<TAB>edge_type", lineno)
            if parts[2] not in EDGE_TYPES:
                raise ParseError(f"edge type {parts[2]!r} not in {EDGE_TYPES}", lineno)
            rows.append(tuple(parts))
    return rows


def build_hin(log, user_features=(), item_features=(), extra_edges=()):
    """Assemble the heterogeneous network from a (train) log and side tables.

    Feature rows are ``(id, column, value)``; each distinct ``column=value``
    becomes one entity node. Extra edges are ``(src, dst, edge_type)`` with
    endpoint kinds read off the edge type, so ``UE`` means user -> entity,
    where the entity id is the ``column=value`` string.
    """
    node_ids = []
    types = []
    index = {}

    def add(node_id, t):
        k = index.get(node_id)
        if k is None:
            k = index[node_id] = len(node_ids)
            node_ids.append(node_id)
            types.append(_TYPE_CODE[t])
        return k

    for uid in log.user_map:
        add(user_node(uid), "U")
    for iid in log.item_map:
        add(item_node(iid), "I")

    edges = set()

    def connect(a, b):
        if a != b:
            edges.add((min(a, b), max(a, b)))

    for u, i in zip(log.users.tolist(), log.items.tolist()):
        connect(index[user_node(log.user_map.id(u))], index[item_node(log.item_map.id(i))])

    for table, known, make, kind in (
        (user_features, log.user_map, user_node, "user"),
        (item_features, log.item_map, item_node, "item"),
    ):
        for row in table:
            ent_id, column, value = (str(x) for x in row)
            if ent_id not in known:
                raise ValidationError(f"{kind} feature row references unknown {kind} id {ent_id!r}")
            e = add(entity_node(column, value), "E")
            connect(index[make(ent_id)], e)

    resolve = {
        "U": lambda s: index.get(user_node(s)),
        "I": lambda s: index.get(item_node(s)),
        "E": lambda s: index.get(f"E:{s}"),
    }
    for src, dst, etype in extra_edges:
        if etype not in EDGE_TYPES:
            raise ValidationError(f"edge type {etype!r} not in {EDGE_TYPES}")
        ta, tb = etype[0], etype[1]
        a, b = resolve[ta](str(src)), resolve[tb](str(dst))
        if a is None or b is None:
            # entity endpoints may be introduced by an edge alone
            if a is None and ta == "E":
                a = add(f"E:{src}", "E")
            if b is None and tb == "E":
                b = add(f"E:{dst}", "E")
        if a is None or b is None:
            raise ValidationError(f"extra edge {src!r}-{dst!r} ({etype}) references an unknown node")
        connect(a, b)

    types_arr = np.array(types, dtype=np.int8)
    nbr = [defaultdict(list) for _ in node_ids]
    counts = Counter()
    for a, b in sorted(edges):
        ta, tb = NODE_TYPES[types_arr[a]], NODE_TYPES[types_arr[b]]
        nbr[a][tb].append(b)
        nbr[b][ta].append(a)
        counts[edge_type_name(ta, tb)] += 1
    adjacency = tuple(
        {t: np.array(sorted(v), dtype=np.int64) for t, v in sorted(d.items())} for d in nbr
    )
    types_arr.setflags(write=False)
    return HinGraph(tuple(node_ids), types_arr, adjacency, dict(counts))
