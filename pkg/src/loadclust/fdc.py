"""Density-peaks clustering on a precomputed distance matrix.

Steps: cutoff distance from a quantile of the pairwise distances, neighbor
count density, distance to the nearest denser element, centers by largest
rho*delta, low-density far-away outliers as extra seeds, then assignment
down the density order.

Ties are broken by lower index everywhere. The effective density order sorts
by (rho descending, index ascending), and "denser than i" means "earlier than
i in that order".
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_NEIGHBOR_FRACTION = 0.015
OUTLIER_RHO = 0.001


class DegenerateDistances(UserWarning):
    """All off-diagonal distances are equal."""


@dataclass(frozen=True, eq=False)
class DecisionGraph:
    rho: np.ndarray
    delta: np.ndarray
    nhd: np.ndarray  # -1 for the root
    order: np.ndarray  # effective density order, densest first

    @property
    def gamma(self) -> np.ndarray:
        return self.rho * self.delta

    @property
    def root(self) -> int:
        return int(self.order[0])

    def __len__(self):
        return len(self.rho)


@dataclass(frozen=True, eq=False)
class ClusterResult:
    centers: np.ndarray
    outliers: np.ndarray
    assignment: np.ndarray

    @property
    def seeds(self) -> np.ndarray:
        """Cluster seeds indexed by cluster id: centers first, then outliers."""
        return np.concatenate([self.centers, self.outliers]).astype(int)

    @property
    def k_effective(self) -> int:
        return len(self.centers) + len(self.outliers)


def select_dc(d: np.ndarray, neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION) -> float:
    """Cutoff distance: the ``neighbor_fraction`` quantile of the pairwise distances.

    With M = n(n-1)/2 pairs this is the q-th smallest pair distance,
    q = round(fraction * M) clipped to [1, M], so each element has on average
    about fraction*n neighbors. A zero quantile (duplicates) moves up to the
    smallest positive distance.
    """
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least two elements to choose d_c")
    if not (0.0 < neighbor_fraction < 1.0):
        raise ValueError("neighbor_fraction must lie in (0, 1)")
    pooled = np.sort(d[np.triu_indices(n, k=1)])
    if pooled[0] == pooled[-1]:
        warnings.warn("all pairwise distances are equal", DegenerateDistances, stacklevel=2)
        return float(pooled[0])
    q = min(max(int(round(neighbor_fraction * len(pooled))), 1), len(pooled))
    dc = pooled[q - 1]
    if dc <= 0.0:
        dc = pooled[pooled > 0.0][0]
    return float(dc)


def compute_density(d: np.ndarray, d_c: float) -> np.ndarray:
    """Fraction of the other elements closer than ``d_c``."""
    n = d.shape[0]
    if n == 1:
        return np.zeros(1)
    near = d < d_c
    np.fill_diagonal(near, False)
    return near.sum(axis=1) / (n - 1)


def density_order(rho: np.ndarray) -> np.ndarray:
    idx = np.arange(len(rho))
    return np.lexsort((idx, -rho))


def compute_delta(d: np.ndarray, rho: np.ndarray) -> DecisionGraph:
    n = d.shape[0]
    order = density_order(rho)
    delta = np.zeros(n)
    nhd = np.full(n, -1, dtype=int)
    if n > 1:
        delta[order[0]] = d[order[0]].max()
    for pos in range(1, n):
        i = order[pos]
        denser = order[:pos]
        dist = d[i, denser]
        best = dist.min()
        j = denser[dist == best].min()
        delta[i] = best
        nhd[i] = j
    return DecisionGraph(rho=np.asarray(rho, dtype=float), delta=delta, nhd=nhd, order=order)


def select_centers(g: DecisionGraph, nc: int) -> np.ndarray:
    """Indices of the ``nc`` largest rho*delta, ties by larger delta then lower index."""
    n = len(g)
    if not (1 <= nc <= n):
        raise ValueError(f"nc must lie in [1, {n}], got {nc}")
    idx = np.arange(n)
    rank = np.lexsort((idx, -g.delta, -g.gamma))
    return rank[:nc].astype(int)


def detect_outliers(g: DecisionGraph, centers: np.ndarray) -> np.ndarray:
    """Non-centers with rho < 0.001 and delta above the mean center delta."""
    centers = np.asarray(centers, dtype=int)
    if len(centers) == 0:
        return np.zeros(0, dtype=int)
    thresh = g.delta[centers].mean()
    mask = (g.rho < OUTLIER_RHO) & (g.delta > thresh)
    mask[centers] = False
    return np.flatnonzero(mask).astype(int)


def assign(g: DecisionGraph, centers, outliers, d: np.ndarray | None = None) -> ClusterResult:
    """Label every element with the cluster of its nearest denser neighbor.

    Seeds (centers, then outliers) get ids 0..k-1. If the density root is not
    a seed it joins the nearest center, which needs the distance matrix ``d``.
    """
    centers = np.asarray(centers, dtype=int)
    outliers = np.asarray(outliers, dtype=int)
    seeds = np.concatenate([centers, outliers])
    if len(seeds) == 0:
        raise ValueError("need at least one center or outlier")
    n = len(g)
    label = np.full(n, -1, dtype=int)
    label[seeds] = np.arange(len(seeds))
    for i in g.order:
        if label[i] >= 0:
            continue
        j = g.nhd[i]
        if j < 0:
            if d is None:
                raise ValueError("root is not a seed; pass the distance matrix to assign it")
            dist = d[i, centers]
            j = centers[dist == dist.min()].min()
        label[i] = label[j]
    return ClusterResult(centers=centers, outliers=outliers, assignment=label)


def cluster(d: np.ndarray, nc: int, neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION):
    """Full pipeline on a distance matrix; returns (DecisionGraph, ClusterResult)."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if n == 1:
        g = DecisionGraph(np.zeros(1), np.zeros(1), np.full(1, -1), np.zeros(1, dtype=int))
        return g, ClusterResult(np.zeros(1, dtype=int), np.zeros(0, dtype=int), np.zeros(1, dtype=int))
    nc = min(nc, n)
    dc = select_dc(d, neighbor_fraction)
    rho = compute_density(d, dc)
    g = compute_delta(d, rho)
    centers = select_centers(g, nc)
    outliers = detect_outliers(g, centers)
    return g, assign(g, centers, outliers, d)
