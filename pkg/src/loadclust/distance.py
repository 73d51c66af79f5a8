"""Distances between load models.

The PFR distance is the plain sum of squared differences over every P and Q
sample of every fault (no square root, no dt weighting). It is therefore a
squared Euclidean distance between flattened bundles: symmetric and zero on
identical bundles, but it does not satisfy the triangle inequality. Density
peaks clustering never needs it to.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .load_model import CompositeLoadModel
from .pfr import PfrBundle


class GridMismatch(ValueError):
    pass


def _check_grids(a: PfrBundle, b: PfrBundle, where: str = "") -> None:
    if a.h != b.h:
        raise GridMismatch(f"{where}bundles have {a.h} and {b.h} scenarios")
    for k, (ca, cb) in enumerate(zip(a.curves, b.curves)):
        if len(ca.times) != len(cb.times) or not np.array_equal(ca.times, cb.times):
            raise GridMismatch(f"{where}time grids differ in scenario {k}")


def pfr_distance(a: PfrBundle, b: PfrBundle) -> float:
    _check_grids(a, b)
    diff = a.features() - b.features()
    return float(np.sum(diff * diff))


def _sqeuclidean_matrix(x: np.ndarray) -> np.ndarray:
    """Pairwise squared distances of the rows of ``x``, upper triangle mirrored."""
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n - 1):
        diff = x[i + 1:] - x[i]
        row = np.sum(diff * diff, axis=1)
        d[i, i + 1:] = row
        d[i + 1:, i] = row
    return d


def build_distance_matrix(bundles: Sequence[PfrBundle]) -> np.ndarray:
    """Dense symmetric matrix of pairwise PFR distances."""
    bundles = list(bundles)
    if not bundles:
        raise ValueError("no bundles")
    for j in range(1, len(bundles)):
        _check_grids(bundles[0], bundles[j], where=f"pair (0, {j}): ")
    feats = np.stack([b.features() for b in bundles])
    return _sqeuclidean_matrix(feats)


def parameter_distance(a: CompositeLoadModel, b: CompositeLoadModel) -> float:
    """Euclidean distance between raw parameter vectors [p, Pas, Prs, Pd]."""
    return float(np.linalg.norm(a.parameter_vector() - b.parameter_vector()))


def parameter_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of a parameter matrix."""
    return np.sqrt(_sqeuclidean_matrix(np.asarray(vectors, dtype=float)))
