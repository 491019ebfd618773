"""Complete-linkage agglomerative clustering under correlation distance.

:class:`AttractorClustering` wraps the pieces in the scikit-learn estimator
protocol: ``fit`` builds the merge tree and variance curve, picks ``k`` at the
elbow (unless ``n_clusters`` is given) and exposes ``labels_``.
"""
from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_feature_matrix

ARCHETYPES = ("Global", "Downtown", "Residential", "Other")
VARIANCE_SCALINGS = ("zscore", "raw")


def correlation_distance(x, y) -> float:
    """One minus the Pearson correlation of ``x`` and ``y``, in [0, 2].

    If exactly one vector is constant the distance is 1; two constant vectors
    are at distance 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"vectors must be 1-d with equal length, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("vectors need at least 2 elements")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = math.sqrt(float(np.dot(xc, xc)))
    ny = math.sqrt(float(np.dot(yc, yc)))
    if nx == 0.0 and ny == 0.0:
        return 0.0
    if nx == 0.0 or ny == 0.0:
        return 1.0
    r = float(np.dot(xc, yc)) / (nx * ny)
    return 1.0 - min(1.0, max(-1.0, r))


def pairwise_correlation_distances(X) -> np.ndarray:
    """Symmetric (n, n) correlation-distance matrix with an exact zero diagonal."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", Xc, Xc))
    flat = norms == 0.0
    U = np.divide(Xc, norms[:, None], out=np.zeros_like(Xc), where=~flat[:, None])
    D = 1.0 - np.clip(U @ U.T, -1.0, 1.0)
    D[flat, :] = 1.0
    D[:, flat] = 1.0
    D[np.ix_(flat, flat)] = 0.0
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass(frozen=True)
class Merge:
    cluster_a: int
    cluster_b: int
    distance: float
    new_cluster: int
    size: int


@dataclass(frozen=True)
class MergeTree:
    """Agglomeration history. Leaves are clusters ``0..n-1``; merge ``s`` creates cluster ``n + s``."""

    merges: tuple[Merge, ...]
    leaves: tuple

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def distances(self) -> np.ndarray:
        return np.array([m.distance for m in self.merges], dtype=float)

    def assignment(self, k: int) -> dict:
        return dict(zip(self.leaves, cut(self, k).tolist()))


def hac_complete(vectors=None, leaves: Sequence | None = None, distances: np.ndarray | None = None) -> MergeTree:
    """Complete-linkage agglomeration over correlation distance.

    Equal-distance candidates are resolved by the lexicographically smallest
    ``(lower cluster id, higher cluster id)`` pair. A precomputed distance
    matrix may be passed instead of ``vectors``.
    """
    if distances is None:
        X = check_feature_matrix(vectors, min_samples=2)
        D = pairwise_correlation_distances(X)
    else:
        D = np.array(distances, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 2:
            raise ValueError("need a square distance matrix over at least 2 points")
    n = D.shape[0]
    if leaves is None:
        leaves = tuple(range(n))
    elif len(leaves) != n:
        raise ValueError(f"{len(leaves)} leaves for {n} vectors")
    np.fill_diagonal(D, np.inf)

    slot_id = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    row_min = D.min(axis=1)
    merges = []
    for step in range(n - 1):
        m = row_min.min()
        best = None
        for r in np.flatnonzero(row_min == m):
            cols = np.flatnonzero(D[r] == m)
            ids = slot_id[cols]
            lo = np.minimum(ids, slot_id[r])
            hi = np.maximum(ids, slot_id[r])
            i = np.lexsort((hi, lo))[0]
            cand = (int(lo[i]), int(hi[i]), int(r), int(cols[i]))
            if best is None or cand[:2] < best[:2]:
                best = cand
        a, b, s, t = best
        new_id = n + step
        merges.append(Merge(a, b, float(m), new_id, int(size[s] + size[t])))

        old_s = D[:, s].copy()
        old_t = D[:, t].copy()
        row = np.maximum(D[s], D[t])
        row[s] = np.inf
        row[t] = np.inf
        D[s, :] = row
        D[:, s] = row
        D[t, :] = np.inf
        D[:, t] = np.inf
        active[t] = False
        slot_id[s] = new_id
        size[s] += size[t]
        size[t] = 0
        # rows whose minimum sat in column s or t must be rescanned; complete
        # linkage only raises distances so other rows keep their minimum
        stale = active & ((old_s == row_min) | (old_t == row_min))
        stale[s] = False
        if stale.any():
            row_min[stale] = D[stale].min(axis=1)
        row_min[s] = row.min()
        row_min[t] = np.inf
    return MergeTree(tuple(merges), tuple(leaves))


def cut(tree: MergeTree, k: int) -> np.ndarray:
    """Cluster index per leaf after applying the first ``n - k`` merges.

    Clusters are numbered by descending size, ties broken by smallest member leaf.
    """
    n = tree.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for m in tree.merges[: n - k]:
        parent[find(m.cluster_a)] = m.new_cluster
        parent[find(m.cluster_b)] = m.new_cluster
    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)

    def order(members):
        return (-len(members), min(tree.leaves[i] for i in members))

    labels = np.empty(n, dtype=np.int64)
    for idx, members in enumerate(sorted(groups.values(), key=order)):
        labels[members] = idx
    return labels


def _scaled(X: np.ndarray, scaling: str) -> np.ndarray:
    if scaling not in VARIANCE_SCALINGS:
        raise ValueError(f"variance_scaling must be one of {VARIANCE_SCALINGS}, got {scaling!r}")
    if scaling == "raw":
        return X
    return zscore(X)


def zscore(X) -> np.ndarray:
    """Column-wise standardization; constant columns map to zero."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    return np.divide(X - X.mean(axis=0), sd, out=np.zeros_like(X), where=sd > 0)


def within_sum_of_squares(Z: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for c in np.unique(labels):
        part = Z[labels == c]
        total += float(((part - part.mean(axis=0)) ** 2).sum())
    return total


def variance_curve(vectors, tree: MergeTree, k_max: int = 10, scaling: str = "zscore") -> list[tuple[int, float]]:
    """Within-cluster over total sum of squares for each cut ``k = 1..k_max``."""
    X = check_feature_matrix(vectors, min_samples=1)
    n = len(X)
    if k_max > n:
        raise ValueError(f"k_max={k_max} exceeds the number of vectors ({n})")
    Z = _scaled(X, scaling)
    total = float(((Z - Z.mean(axis=0)) ** 2).sum())
    ratios = [1.0]
    for k in range(2, k_max + 1):
        if total == 0.0:
            ratios.append(0.0)
            continue
        ratios.append(min(1.0, within_sum_of_squares(Z, cut(tree, k)) / total))
    # cuts are nested, so the ratio cannot grow; this only absorbs rounding
    ratios = np.minimum.accumulate(ratios).tolist()
    return list(zip(range(1, k_max + 1), ratios))


def select_k(curve, elbow_tau: float = 0.05) -> int:
    """Smallest k after which no split removes ``elbow_tau`` or more of the curve's full drop.

    A flat step followed by a steep one is not an elbow, so every later drop
    must stay under the threshold, not just the next one.
    """
    ratios = [r for _, r in curve] if len(curve) and np.ndim(curve[0]) else list(curve)
    if len(ratios) < 3:
        raise ValueError("select_k needs a curve with at least 3 points")
    k_max = len(ratios)
    threshold = elbow_tau * (ratios[0] - ratios[-1])
    drops = [ratios[k - 1] - ratios[k] for k in range(1, k_max)]
    for k in range(1, k_max):
        if all(d < threshold for d in drops[k - 1:]):
            return k
    warnings.warn(f"no elbow found with elbow_tau={elbow_tau}; falling back to k={k_max - 1}", stacklevel=2)
    return k_max - 1


def label_archetypes(labels, features: Sequence, k: int | None = None) -> dict[int, str]:
    """Name clusters Global / Downtown / Residential from their mean features.

    ``features`` are :class:`~urban_attractors.features.AttractionFeatures`
    aligned with ``labels``. Only a 3-cluster cut is named; otherwise, or when
    inflow density and mean distance disagree on which cluster is Downtown,
    every cluster is "Other".
    """
    labels = np.asarray(labels)
    clusters = sorted(np.unique(labels).tolist())
    k = len(clusters) if k is None else k
    other = {c: "Other" for c in clusters}
    if k != 3 or len(clusters) != 3:
        return other

    def mean(attr, c):
        return float(np.mean([getattr(f, attr) for f, lab in zip(features, labels) if lab == c]))

    sd = {c: mean("sd", c) for c in clusters}
    glob = max(clusters, key=lambda c: (sd[c], -c))
    rest = [c for c in clusters if c != glob]
    dens = {c: mean("inflow_per_m2", c) for c in rest}
    mu = {c: mean("mu", c) for c in rest}
    a, b = rest
    if dens[a] > dens[b] and mu[a] < mu[b]:
        downtown, residential = a, b
    elif dens[b] > dens[a] and mu[b] < mu[a]:
        downtown, residential = b, a
    else:
        warnings.warn("inflow density and mean distance disagree on the Downtown cluster; labels set to Other",
                      stacklevel=2)
        return other
    return {glob: "Global", downtown: "Downtown", residential: "Residential"}


class AttractorClustering(ClusterMixin, BaseEstimator):
    """Hierarchical attractor classification of ``[inflow, sd, mu, sigma]`` rows.

    Parameters
    ----------
    n_clusters : int or None
        Fixed cut. None picks k at the elbow of the variance curve.
    k_max : int
        Largest k on the variance curve (clamped to the sample count).
    elbow_tau : float
        Relative drop below which the curve counts as flat.
    variance_scaling : {"zscore", "raw"}
        Feature scaling used for the variance curve only.
    standardize_features : bool
        Z-score columns before computing correlation distances.

    Attributes
    ----------
    tree_ : MergeTree
    variance_curve_ : list of (k, within_over_total)
    n_clusters_ : int
    labels_ : ndarray of shape (n_samples,)
    """

    def __init__(self, n_clusters=None, k_max=10, elbow_tau=0.05, variance_scaling="zscore",
                 standardize_features=False):
        self.n_clusters = n_clusters
        self.k_max = k_max
        self.elbow_tau = elbow_tau
        self.variance_scaling = variance_scaling
        self.standardize_features = standardize_features

    def fit(self, X, y=None):
        X = check_feature_matrix(X, min_samples=2)
        n = len(X)
        if self.variance_scaling not in VARIANCE_SCALINGS:
            raise ValueError(f"variance_scaling must be one of {VARIANCE_SCALINGS}")
        self.tree_ = hac_complete(zscore(X) if self.standardize_features else X)
        self.variance_curve_ = variance_curve(X, self.tree_, min(self.k_max, n), self.variance_scaling)
        if self.n_clusters is not None:
            k = int(self.n_clusters)
            if not 1 <= k <= n:
                raise ValueError(f"n_clusters must be in [1, {n}], got {k}")
        elif len(self.variance_curve_) >= 3:
            k = select_k(self.variance_curve_, self.elbow_tau)
        else:
            k = len(self.variance_curve_)
        self.n_clusters_ = k
        self.labels_ = cut(self.tree_, k)
        return self

    def label_archetypes(self, features: Sequence) -> dict[int, str]:
        check_is_fitted(self, "labels_")
        return label_archetypes(self.labels_, features, self.n_clusters_)

    def between_over_total(self) -> list[tuple[int, float]]:
        check_is_fitted(self, "variance_curve_")
        return [(k, 1.0 - r) for k, r in self.variance_curve_]
