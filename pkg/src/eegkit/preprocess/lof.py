"""Bad-channel detection with the Local Outlier Factor."""
from __future__ import annotations

import numpy as np

from ..core import EEGKitError, Recording

__all__ = ["local_outlier_factor", "channel_features", "detect_bad_channels"]


def local_outlier_factor(X, k, min_reach=0.0):
    """LOF score of every row of ``X`` (Euclidean metric, k nearest neighbours).

    Ties at the k-distance are kept in the neighbourhood, as in the original
    definition, so a neighbourhood may hold more than ``k`` points.
    ``min_reach`` floors the reachability distance: points closer than that
    count as equally dense, so a tight cloud scores 1 instead of amplifying
    its sampling noise. ``min_reach=0`` is the classic LOF.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k < n:
        raise EEGKitError(f"LOF needs 1 <= k < n_points (k={k}, n={n})")
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    kdist = np.sort(d, axis=1)[:, k - 1]
    neigh = d <= kdist[:, None] * (1 + 1e-12) + 1e-300
    reach = np.maximum(np.maximum(d, kdist[None, :]), min_reach)
    mean_reach = np.array([reach[i, neigh[i]].mean() for i in range(n)])
    with np.errstate(divide="ignore"):
        lrd = np.where(mean_reach > 0, 1.0 / mean_reach, np.inf)
    scores = np.empty(n)
    for i in range(n):
        nb = lrd[neigh[i]]
        if np.isinf(lrd[i]):
            scores[i] = 1.0 if np.all(np.isinf(nb)) else 0.0
        elif np.any(np.isinf(nb)):
            scores[i] = np.inf
        else:
            scores[i] = nb.mean() / lrd[i]
    return scores


def _window_view(data, win):
    n_win = data.shape[1] // win
    if n_win == 0:
        return data[:, None, :]
    return data[:, : n_win * win].reshape(data.shape[0], n_win, win)


def channel_features(data, rate):
    """Per-channel (robust SD, lag-1 autocorrelation, mean |gradient|, correlation to channel mean).

    Each statistic is computed in 1 s windows and summarized by its median over
    windows, so brief transients (blinks) do not dominate.
    """
    data = np.asarray(data, dtype=np.float64)
    win = max(4, int(round(rate)))
    w = _window_view(data, win)
    w = w - w.mean(axis=-1, keepdims=True)
    mad = np.median(np.abs(w - np.median(w, axis=-1, keepdims=True)), axis=-1)
    robust_sd = 1.4826 * mad
    var = (w ** 2).sum(-1)
    safe = np.where(var > 0, var, 1.0)
    ac1 = np.where(var > 0, (w[..., 1:] * w[..., :-1]).sum(-1) / safe, 0.0)
    grad = np.abs(np.diff(w, axis=-1)).mean(-1)
    m = w.mean(axis=0, keepdims=True)
    mv = (m ** 2).sum(-1)
    denom = np.sqrt(var * mv)
    corr = np.where(denom > 0, (w * m).sum(-1) / np.where(denom > 0, denom, 1.0), 0.0)
    feats = np.stack([robust_sd, ac1, grad, corr], axis=-1)
    return np.median(feats, axis=1)


def _robust_scale(F, floor=0.3, abs_floor=0.05):
    """Center on the median and scale by the MAD.

    A single wild channel cannot shrink its own score as it would with the
    mean and SD. The scale is floored at ``floor * |median|`` and at
    ``abs_floor`` so features that barely vary across channels (lag-1
    autocorrelation, near-zero correlations) do not blow up.
    """
    med = np.median(F, axis=0)
    mad = 1.4826 * np.median(np.abs(F - med), axis=0)
    scale = np.maximum(np.maximum(mad, floor * np.abs(med)), abs_floor)
    return (F - med) / np.where(scale > 0, scale, 1.0)


def detect_bad_channels(rec: Recording, k=3, threshold=2.5, exclude=(), return_scores=False,
                        min_reach=1.0):
    """Channels whose LOF over robustly scaled channel features exceeds ``threshold``.

    Channels in ``exclude`` are left out of the feature cloud (e.g. a reference
    channel that is identically zero). ``min_reach`` is in scaled feature
    units, where 1 is one floored MAD.
    """
    labels = [c for c in rec.channels if c not in set(exclude)]
    if len(labels) < 3:
        raise EEGKitError(f"bad-channel detection needs at least 3 channels, got {len(labels)}")
    if not 1 <= k < len(labels):
        raise EEGKitError(f"k={k} must be smaller than the number of channels ({len(labels)})")
    idx = [rec.index(c) for c in labels]
    feats = _robust_scale(channel_features(rec.data[idx], rec.rate))
    scores = local_outlier_factor(feats, k, min_reach)
    bad = [c for c, s in zip(labels, scores) if s > threshold]
    if return_scores:
        return bad, dict(zip(labels, scores.tolist()))
    return bad
