"""Paired-sample cluster-based permutation test over channel x point grids.

Cluster formation: supra-threshold points (|t| above the two-sided critical
value) of equal sign are connected when they share a channel and sit at
neighbouring point indices, or share a point index on adjacent channels.
Cluster mass is the sum of t. The null distribution is the maximum |mass|
under random sign flips of the per-subject differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse, stats
from scipy.sparse.csgraph import connected_components

from ..core import AdjacencyGraph, EEGKitError

__all__ = [
    "T_SENTINEL",
    "ClusterTestConfig",
    "Cluster",
    "ClusterTestResult",
    "dependent_t",
    "paired_t_flipped",
    "label_clusters",
    "cluster_permutation_test",
    "EXACT_LIMIT",
]

# |t| assigned to zero-variance, non-zero-mean differences
T_SENTINEL = 1e15
EXACT_LIMIT = 4096
_BLOCK = 128


def paired_t_flipped(D, signs):
    """Paired t for every sign-flip pattern.

    Parameters
    ----------
    D : array, shape (n_subjects, n_points)
        Per-subject differences.
    signs : array, shape (n_perm, n_subjects)
        Entries +1/-1.

    Returns
    -------
    t : array, shape (n_perm, n_points)
    """
    n = D.shape[0]
    mean = (signs @ D) / n
    ss = (D * D).sum(axis=0)
    var = (ss[None, :] - n * mean * mean) / (n - 1)
    var = np.maximum(var, 0.0)
    # Variance this small relative to the raw second moment is rounding noise.
    degenerate = var <= 1e-13 * np.maximum(ss[None, :] / n, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / np.sqrt(var / n)
    t = np.where(degenerate, np.sign(mean) * T_SENTINEL, t)
    return np.where(ss[None, :] == 0, 0.0, t)


def dependent_t(a, b):
    """Paired t-map of ``a - b`` over the subject axis (0) and two-sided p-map."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EEGKitError(f"shape mismatch: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise EEGKitError("dependent-samples t needs at least 2 subjects")
    D = (a - b).reshape(n, -1)
    t = paired_t_flipped(D, np.ones((1, n)))[0]
    p = np.where(np.abs(t) >= T_SENTINEL, 0.0, 2 * stats.t.sf(np.abs(t), n - 1))
    return t.reshape(a.shape[1:]), p.reshape(a.shape[1:])


def _grid_edges(adj):
    i, j = np.nonzero(np.triu(adj))
    return list(zip(i.tolist(), j.tolist()))


def label_clusters(tmaps, threshold, adj):
    """Connected supra-threshold clusters for a stack of t-maps.

    Parameters
    ----------
    tmaps : array, shape (n_maps, n_channels, n_points)
    threshold : float
        Points with ``|t| > threshold`` are supra-threshold.
    adj : bool array, shape (n_channels, n_channels)

    Returns
    -------
    labels : int array like ``tmaps``; 0 outside clusters, otherwise a cluster
        id that is unique across the whole stack.
    masses : float array indexed by ``id - 1``.
    owner : int array, map index of every cluster.
    """
    P, C, T = tmaps.shape
    s = np.where(tmaps > threshold, 1, np.where(tmaps < -threshold, -1, 0)).astype(np.int8)
    prev = np.zeros_like(s)
    prev[..., 1:] = s[..., :-1]
    start = (s != 0) & (s != prev)
    run = np.cumsum(start.ravel()).reshape(s.shape)
    run = np.where(s != 0, run, 0)
    n_runs = int(run.max()) if run.size else 0
    if n_runs == 0:
        return np.zeros(s.shape, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64)
    src, dst = [], []
    for ci, cj in _grid_edges(adj):
        both = (s[:, ci, :] != 0) & (s[:, ci, :] == s[:, cj, :])
        if both.any():
            src.append(run[:, ci, :][both])
            dst.append(run[:, cj, :][both])
    if src:
        src = np.concatenate(src) - 1
        dst = np.concatenate(dst) - 1
        g = sparse.coo_matrix((np.ones(len(src)), (src, dst)), shape=(n_runs, n_runs))
        _, comp = connected_components(g, directed=False)
    else:
        comp = np.arange(n_runs)
    # renumber components in order of first appearance for stable ids
    _, first, inverse = np.unique(comp, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    comp = order[inverse]
    labels = np.where(run > 0, comp[np.maximum(run, 1) - 1] + 1, 0)
    n_clusters = int(comp.max()) + 1
    supra = labels > 0
    masses = np.bincount(labels[supra] - 1, weights=tmaps[supra], minlength=n_clusters)
    owner_of_point = np.broadcast_to(np.arange(P)[:, None, None], s.shape)[supra]
    owner = np.zeros(n_clusters, dtype=np.int64)
    owner[labels[supra] - 1] = owner_of_point
    return labels, masses, owner


def _max_abs_mass(tmaps, threshold, adj):
    labels, masses, owner = label_clusters(tmaps, threshold, adj)
    out = np.zeros(tmaps.shape[0])
    if len(masses):
        np.maximum.at(out, owner, np.abs(masses))
    return out


@dataclass(frozen=True)
class ClusterTestConfig:
    adjacency: AdjacencyGraph
    point_alpha: float = 0.05
    cluster_alpha: float = 0.05
    n_permutations: int = 1000
    tail: str = "two_sided"
    seed: int = 0
    exact_when_feasible: bool = True

    def __post_init__(self):
        if not 0 < self.point_alpha < 1 or not 0 < self.cluster_alpha < 1:
            raise EEGKitError("alphas must lie strictly between 0 and 1")
        if self.n_permutations < 1:
            raise EEGKitError("n_permutations must be at least 1")
        if self.tail != "two_sided":
            raise EEGKitError("only two-sided tests are supported")


@dataclass(frozen=True, eq=False)
class Cluster:
    sign: int
    mass: float
    p_value: float
    mask: np.ndarray  # bool, channel x point
    significant: bool

    @property
    def members(self):
        return [tuple(x) for x in np.argwhere(self.mask).tolist()]

    @property
    def size(self):
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class ClusterTestResult:
    clusters: list
    tmap: np.ndarray
    pmap: np.ndarray
    null_distribution: np.ndarray
    threshold: float
    n_permutations: int
    exact: bool
    channels: tuple
    points: np.ndarray
    cluster_alpha: float
    meta: dict = field(default_factory=dict)

    @property
    def significant(self):
        return [c for c in self.clusters if c.significant]

    def channel_extent(self, cluster):
        """{channel: (first point value, last point value)} covered by ``cluster``."""
        out = {}
        for ci, ch in enumerate(self.channels):
            idx = np.nonzero(cluster.mask[ci])[0]
            if len(idx):
                out[ch] = (float(self.points[idx[0]]), float(self.points[idx[-1]]))
        return out

    def to_dict(self):
        clusters = []
        for k, c in enumerate(self.clusters):
            pts = np.nonzero(c.mask.any(axis=0))[0]
            clusters.append({
                "id": k,
                "sign": int(c.sign),
                "mass": float(c.mass),
                "p_value": float(c.p_value),
                "significant": bool(c.significant),
                "size": c.size,
                "channels": [self.channels[i] for i in np.nonzero(c.mask.any(axis=1))[0]],
                "extent": [float(self.points[pts[0]]), float(self.points[pts[-1]])],
                "channel_extent": {k2: list(v) for k2, v in self.channel_extent(c).items()},
                "members": [[self.channels[i], float(self.points[j])] for i, j in c.members],
            })
        return {
            "channels": list(self.channels),
            "points": [float(x) for x in self.points],
            "threshold": float(self.threshold),
            "n_permutations": int(self.n_permutations),
            "exact": bool(self.exact),
            "cluster_alpha": float(self.cluster_alpha),
            "clusters": clusters,
            **self.meta,
        }


def _all_sign_patterns(n):
    codes = np.arange(2 ** n)[:, None]
    bits = (codes >> np.arange(n)[None, :]) & 1
    return np.where(bits == 1, -1.0, 1.0)


def cluster_permutation_test(cond_a, cond_b, cfg: ClusterTestConfig, channels=None,
                             points=None) -> ClusterTestResult:
    """Cluster test of ``cond_a - cond_b``; inputs shaped (subject, channel, point)."""
    A = np.asarray(cond_a, dtype=np.float64)
    B = np.asarray(cond_b, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 3:
        raise EEGKitError(f"conditions must share a (subject, channel, point) shape: {A.shape} vs {B.shape}")
    n, C, T = A.shape
    if n < 2:
        raise EEGKitError("cluster test needs at least 2 subjects")
    channels = tuple(cfg.adjacency.nodes if channels is None else channels)
    if len(channels) != C:
        raise EEGKitError(f"{C} channels in data but {len(channels)} labels given")
    if tuple(cfg.adjacency.nodes) != channels:
        if set(channels) - set(cfg.adjacency.nodes):
            raise EEGKitError("adjacency nodes do not cover the data channels")
        adjg = cfg.adjacency.subset(channels)
    else:
        adjg = cfg.adjacency
    adj = adjg.edges
    points = np.arange(T, dtype=float) if points is None else np.asarray(points, dtype=float)

    D = (A - B).reshape(n, C * T)
    threshold = float(stats.t.ppf(1 - cfg.point_alpha / 2, n - 1))
    t_obs = paired_t_flipped(D, np.ones((1, n)))[0].reshape(C, T)
    p_obs = np.where(np.abs(t_obs) >= T_SENTINEL, 0.0, 2 * stats.t.sf(np.abs(t_obs), n - 1))

    exact = cfg.exact_when_feasible and 2 ** n <= EXACT_LIMIT
    if exact:
        signs_all = _all_sign_patterns(n)
    else:
        rng = np.random.default_rng(cfg.seed)
        signs_all = np.where(rng.random((cfg.n_permutations, n)) < 0.5, -1.0, 1.0)
    null = np.concatenate([
        _max_abs_mass(paired_t_flipped(D, signs_all[i:i + _BLOCK]).reshape(-1, C, T), threshold, adj)
        for i in range(0, len(signs_all), _BLOCK)
    ])

    labels, masses, _ = label_clusters(t_obs[None], threshold, adj)
    clusters = []
    for k, mass in enumerate(masses):
        ge = np.count_nonzero(null >= abs(mass) * (1 - 1e-10))
        p = ge / len(null) if exact else (1 + ge) / (1 + len(null))
        p = min(1.0, p)
        clusters.append(Cluster(int(np.sign(mass)), float(mass), float(p), labels[0] == k + 1,
                                bool(p <= cfg.cluster_alpha)))
    clusters.sort(key=lambda c: (c.p_value, -abs(c.mass)))
    return ClusterTestResult(clusters, t_obs, p_obs, null, threshold,
                             len(null), bool(exact), channels, points, cfg.cluster_alpha)
