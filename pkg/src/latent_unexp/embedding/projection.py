"""Low-dimensional projection of embeddings for visual inspection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True, eq=False)
class Projection:
    ids: tuple
    coords: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray
    mean: np.ndarray


def pca_project(table, out_dims=2):
    """Mean-centre the vectors and project them on the leading principal axes."""
    X = np.asarray(table.vectors, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValidationError("projection needs at least two vectors")
    if not 1 <= out_dims <= d:
        raise ValidationError(f"out_dims must lie in [1, {d}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    var = S**2 / (n - 1)
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    comps = Vt[:out_dims]
    coords = Xc @ comps.T
    # deterministic sign: largest-magnitude loading of each axis is positive
    signs = np.sign(comps[np.arange(out_dims), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    comps = comps * signs[:, None]
    coords = coords * signs[None, :]
    if total == 0:
        coords = np.zeros((n, out_dims))
    return Projection(tuple(table.ids), coords, var[:out_dims], ratio[:out_dims], comps, mean)


def write_projection(proj, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"x{k + 1}" for k in range(proj.coords.shape[1])])
        for key, row in zip(proj.ids, proj.coords):
            w.writerow([key] + [repr(float(v)) for v in row])
