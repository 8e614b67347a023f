"""Latent closures over consumed-item embeddings and distance queries.

Three convex regions are supported: an enclosing hypersphere centred on the
midpoint of a furthest pair, the axis-aligned bounding box, and the convex
hull. The hull is never enumerated; the distance from ``x`` to it is the
optimum of ``min ||P^T lam - x||`` over the probability simplex, solved with
a fully-corrective Frank-Wolfe method.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import FormatError, ValidationError

_logger = logging.getLogger(__name__)

EXACT_PAIR_LIMIT = 4096
CLOSURE_KINDS = ("sphere", "box", "hull")


def _as_points(points):
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValidationError("closure needs a non-empty (n, d) point set")
    if not np.all(np.isfinite(P)):
        raise ValidationError("closure points must be finite")
    return P


def _check_query(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise ValidationError(f"query has dimension {x.shape[-1]}, closure has {dim}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("query must be finite")
    return x


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    kind = "sphere"

    @property
    def dim(self):
        return self.center.shape[0]

    def distance(self, x):
        x = _check_query(x, self.dim)
        return max(0.0, float(np.linalg.norm(x - self.center)) - self.radius)

    def distances(self, X):
        X = _check_query(np.atleast_2d(X), self.dim)
        return np.maximum(0.0, np.linalg.norm(X - self.center, axis=1) - self.radius)


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    kind = "box"

    @property
    def dim(self):
        return self.lo.shape[0]

    def distance(self, x):
        return float(self.distances(x)[0])

    def distances(self, X):
        X = _check_query(np.atleast_2d(X), self.dim)
        excess = np.maximum(0.0, np.maximum(self.lo - X, X - self.hi))
        return np.linalg.norm(excess, axis=1)


@dataclass(frozen=True, eq=False)
class Hull:
    points: np.ndarray
    tol: float = 1e-8
    max_iter: int | None = None

    kind = "hull"

    @property
    def dim(self):
        return self.points.shape[1]

    def distance(self, x):
        x = _check_query(x, self.dim)
        return hull_distance_fw(self.points, x, self.tol, self.max_iter).distance

    def distances(self, X):
        X = _check_query(np.atleast_2d(X), self.dim)
        return hull_distances_fw(self.points, X, self.tol, self.max_iter)


def furthest_pair(P):
    """Indices of a diameter-realizing pair.

    Exact for up to ``EXACT_PAIR_LIMIT`` points; beyond that, alternate
    farthest-point sweeps from the first point until the pair stabilizes.
    """
    n = P.shape[0]
    if n == 1:
        return 0, 0
    if n <= EXACT_PAIR_LIMIT:
        d = pdist(P, "sqeuclidean")
        k = int(np.argmax(d))
        # invert the condensed index
        i = int(n - 2 - np.floor(np.sqrt(-8 * k + 4 * n * (n - 1) - 7) / 2.0 - 0.5))
        j = int(k + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2)
        return i, j
    a = 0
    best = (-1.0, 0, 0)
    for _ in range(32):
        dist = np.sum((P - P[a]) ** 2, axis=1)
        b = int(np.argmax(dist))
        if dist[b] <= best[0]:
            break
        best = (float(dist[b]), a, b)
        a = b
    return best[1], best[2]


def build_sphere(points, enclosing=True):
    """Sphere centred on the midpoint of a furthest pair.

    With ``enclosing=True`` the radius is the largest distance from that
    centre to any generating point, so every point is inside. With
    ``enclosing=False`` the radius is half the furthest-pair distance, which
    can leave points outside (kept for comparison only).
    """
    P = _as_points(points)
    i, j = furthest_pair(P)
    center = 0.5 * (P[i] + P[j])
    if enclosing:
        radius = float(np.max(np.linalg.norm(P - center, axis=1)))
    else:
        radius = 0.5 * float(np.linalg.norm(P[i] - P[j]))
    return Sphere(center, radius)


def build_box(points):
    P = _as_points(points)
    return Box(P.min(axis=0), P.max(axis=0))


def build_hull(points, tol=1e-8, max_iter=None):
    """Implicit hull: the de-duplicated generating points (first occurrence order)."""
    P = _as_points(points)
    _, first = np.unique(P, axis=0, return_index=True)
    return Hull(P[np.sort(first)], tol, max_iter)


def build_closure(kind, points, **kwargs):
    if kind == "sphere":
        return build_sphere(points, **kwargs)
    if kind == "box":
        return build_box(points)
    if kind == "hull":
        return build_hull(points, **kwargs)
    raise ValidationError(f"unknown closure kind {kind!r}; expected one of {CLOSURE_KINDS}")


def distance(closure, x):
    """Euclidean distance from ``x`` to the closed region (0 inside)."""
    return closure.distance(x)


@dataclass(frozen=True)
class HullDistanceSolution:
    weights: np.ndarray
    nearest_point: np.ndarray
    distance: float
    duality_gap: float
    iterations: int
    converged: bool = True
    warning: str | None = None


def _default_max_iter(n):
    return max(1000, 10 * n)


def _affine_minimizer(QS):
    # min ||alpha @ QS|| subject to sum(alpha) = 1, via the KKT system
    k = QS.shape[0]
    K = np.empty((k + 1, k + 1))
    K[:k, :k] = QS @ QS.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    K[k, k] = 0.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(K, rhs, rcond=None)[0][:k]


def hull_distance_fw(points, x, tol=1e-8, max_iter=None):
    """Distance from ``x`` to the convex hull of ``points``.

    Fully-corrective Frank-Wolfe (Wolfe's minimum-norm-point method) on
    ``f(lam) = ||lam @ P - x||^2`` over the probability simplex. Each outer
    iteration picks the vertex minimizing the linearization, exactly as in
    Frank-Wolfe, and stops once the duality gap ``2 (z - x) . (z - p_s)`` is at
    most ``tol``. Instead of a line search toward that single vertex, the
    iterate is then re-optimized over the affine hull of its active vertices,
    stepping back to the simplex boundary and dropping vertices whenever an
    affine weight goes non-positive. This terminates finitely, where plain
    Frank-Wolfe zig-zags on thin hulls.
    """
    P = _as_points(points)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != P.shape[1]:
        raise ValidationError(f"query must be a vector of dimension {P.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("hull distance inputs must be finite")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    n = P.shape[0]
    if max_iter is None:
        max_iter = _default_max_iter(n)

    Q = P - x
    j = int(np.argmin(np.einsum("ij,ij->i", Q, Q)))
    active = [j]
    lam = np.ones(1)
    z = Q[j].copy()
    gap = np.inf
    best = np.inf
    it = 0
    while True:
        g = Q @ z
        s = int(np.argmin(g))
        zz = float(z @ z)
        gap = 2.0 * (zz - float(g[s]))
        # stagnation: the norm stopped decreasing at round-off level
        if gap <= tol or s in active or zz >= best or it >= max_iter:
            break
        best = zz
        it += 1
        active.append(s)
        lam = np.append(lam, 0.0)
        while True:
            alpha = _affine_minimizer(Q[active])
            if np.all(alpha > 0.0):
                lam = alpha
                break
            neg = alpha <= 0.0
            theta = float(np.min(lam[neg] / (lam[neg] - alpha[neg])))
            lam = lam + theta * (alpha - lam)
            keep = lam > 0.0
            if keep.all():
                keep[np.flatnonzero(neg)[np.argmin(lam[neg])]] = False
            active = [active[k] for k in np.flatnonzero(keep)]
            lam = lam[keep] / lam[keep].sum()
        z = lam @ Q[active]

    weights = np.zeros(n)
    weights[active] = lam
    converged = gap <= tol or it < max_iter
    warning = None
    if it >= max_iter and gap > 1e3 * tol:
        warning = f"hull solver stopped after {it} iterations with gap {gap:.3g} > 1e3*tol"
        _logger.warning(warning)
    nearest = weights @ P
    return HullDistanceSolution(
        weights, nearest, float(np.linalg.norm(nearest - x)), max(gap, 0.0), it, converged, warning
    )


def hull_distances_fw(points, X, tol=1e-8, max_iter=None):
    """Row-wise :func:`hull_distance_fw` for a query matrix ``X``."""
    P = _as_points(points)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return np.array([hull_distance_fw(P, x, tol, max_iter).distance for x in X])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points):
    """Monotone-chain hull; vertices counter-clockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) <= 2:
        return np.array(pts)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def point_segment_distance(x, a, b):
    x, a, b = (np.asarray(v, dtype=np.float64) for v in (x, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((x - a) @ ab) / denom))
    return float(np.linalg.norm(x - (a + t * ab)))


def hull_distance_exact_2d(points, x):
    """Exact distance from ``x`` to the convex hull of planar ``points``."""
    P = _as_points(points)
    if P.shape[1] != 2:
        raise ValidationError("exact oracle is planar only")
    x = _check_query(x, 2)
    H = convex_hull_2d(P)
    if len(H) == 1:
        return float(np.linalg.norm(x - H[0]))
    if len(H) == 2:
        return point_segment_distance(x, H[0], H[1])
    inside = all(_cross(H[k], H[(k + 1) % len(H)], x) >= 0 for k in range(len(H)))
    if inside:
        return 0.0
    return min(point_segment_distance(x, H[k], H[(k + 1) % len(H)]) for k in range(len(H)))


# closure cache: b"LUCL", u32 version, u64 count, then per record
# (len-prefixed utf-8 user id, u8 tag, payload) with float32 little-endian values
_CACHE_MAGIC = b"LUCL"
_CACHE_VERSION = 1
_TAGS = {"sphere": 0, "box": 1, "hull": 2}


def _write_str(fh, s):
    b = s.encode("utf-8")
    fh.write(struct.pack("<Q", len(b)))
    fh.write(b)


def _read_exact(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise FormatError("unexpected end of closure cache")
    return b


def _read_str(fh):
    (n,) = struct.unpack("<Q", _read_exact(fh, 8))
    return _read_exact(fh, n).decode("utf-8")


def _read_floats(fh, count):
    return np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4").astype(np.float64)


def save_closures(closures, path):
    """Persist ``{user_id: closure}``; a ``None`` closure (cold user) is skipped."""
    items = [(uid, c) for uid, c in closures.items() if c is not None]
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<IQ", _CACHE_VERSION, len(items)))
        for uid, c in items:
            _write_str(fh, str(uid))
            fh.write(struct.pack("<BQ", _TAGS[c.kind], c.dim))
            if c.kind == "sphere":
                fh.write(np.asarray(c.center, dtype="<f4").tobytes())
                fh.write(struct.pack("<f", c.radius))
            elif c.kind == "box":
                fh.write(np.asarray(c.lo, dtype="<f4").tobytes())
                fh.write(np.asarray(c.hi, dtype="<f4").tobytes())
            else:
                fh.write(struct.pack("<Q", c.points.shape[0]))
                fh.write(np.asarray(c.points, dtype="<f4").tobytes())


def load_closures(path, tol=1e-8, max_iter=None):
    with open(path, "rb") as fh:
        if fh.read(4) != _CACHE_MAGIC:
            raise FormatError(f"{path} is not a closure cache")
        version, count = struct.unpack("<IQ", _read_exact(fh, 12))
        if version != _CACHE_VERSION:
            raise FormatError(f"unsupported closure cache version {version}")
        out = {}
        for _ in range(count):
            uid = _read_str(fh)
            tag, dim = struct.unpack("<BQ", _read_exact(fh, 9))
            if tag == 0:
                center = _read_floats(fh, dim)
                radius = float(_read_floats(fh, 1)[0])
                out[uid] = Sphere(center, radius)
            elif tag == 1:
                out[uid] = Box(_read_floats(fh, dim), _read_floats(fh, dim))
            elif tag == 2:
                (rows,) = struct.unpack("<Q", _read_exact(fh, 8))
                out[uid] = Hull(_read_floats(fh, rows * dim).reshape(rows, dim), tol, max_iter)
            else:
                raise FormatError(f"unknown closure tag {tag}")
        return out


def quantize_closure(closure):
    """Round a closure's payload to float32 precision, matching the cache format."""
    f32 = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)  # noqa: E731
    if closure.kind == "sphere":
        return Sphere(f32(closure.center), float(np.float32(closure.radius)))
    if closure.kind == "box":
        return Box(f32(closure.lo), f32(closure.hi))
    return Hull(f32(closure.points), closure.tol, closure.max_iter)
