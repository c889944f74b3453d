"""Spherical-spline interpolation of bad channels (Perrin et al., 1989)."""
from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import legval

from ..core import EEGKitError, Montage, Recording

__all__ = ["spline_g", "interpolation_matrix", "interpolate"]


def spline_g(cosang, m=4, n_terms=7):
    """g(x) = 1/(4 pi) sum_n (2n+1) / (n(n+1))^m P_n(x), n = 1..n_terms."""
    n = np.arange(n_terms + 1, dtype=float)
    coef = np.zeros(n_terms + 1)
    coef[1:] = (2 * n[1:] + 1) / (n[1:] * (n[1:] + 1)) ** m / (4 * np.pi)
    return legval(np.clip(cosang, -1.0, 1.0), coef)


def interpolation_matrix(pos_from, pos_to, m=4, n_terms=7, reg=1e-5):
    """Matrix W with ``values_to = W @ values_from``.

    Solves the bordered system [[G + reg*I, 1], [1', 0]] [C; c0] = [V; 0], so
    constant fields are reproduced exactly.
    """
    pos_from = np.asarray(pos_from, dtype=float)
    pos_to = np.asarray(pos_to, dtype=float)
    n = len(pos_from)
    G = spline_g(pos_from @ pos_from.T, m, n_terms) + reg * np.eye(n)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = G
    A[:n, n] = 1.0
    A[n, :n] = 1.0
    Ainv = np.linalg.pinv(A)
    g_to = spline_g(pos_to @ pos_from.T, m, n_terms)
    B = np.hstack([g_to, np.ones((len(pos_to), 1))])
    return B @ Ainv[:, :n]


def _idw_matrix(pos_from, pos_to):
    ang = np.arccos(np.clip(pos_to @ pos_from.T, -1.0, 1.0))
    w = 1.0 / np.maximum(ang, 1e-9)
    return w / w.sum(axis=1, keepdims=True)


def interpolate(rec: Recording, montage: Montage, bad, m=4, n_terms=7, reg=1e-5, exclude=()):
    """Replace ``bad`` channels by estimates from the remaining ones.

    Spherical splines need at least 4 good channels; with 2-3 good channels an
    inverse angular-distance average is used instead. ``exclude`` channels are
    neither estimated nor used as sources.
    """
    bad = list(dict.fromkeys(bad))
    if not bad:
        return rec
    for lb in bad:
        if lb not in rec.channels:
            raise EEGKitError(f"unknown channel: {lb}")
    good = [c for c in rec.channels if c not in bad and c not in set(exclude)]
    if len(good) < 2:
        raise EEGKitError(f"cannot interpolate {bad}: only {len(good)} good channel(s) left")
    pos_good = montage.positions(good)
    pos_bad = montage.positions(bad)
    if len(good) >= 4:
        W = interpolation_matrix(pos_good, pos_bad, m, n_terms, reg)
    else:
        W = _idw_matrix(pos_good, pos_bad)
    data = np.array(rec.data)
    gi = [rec.index(c) for c in good]
    bi = [rec.index(c) for c in bad]
    data[bi] = W @ rec.data[gi]
    return rec.replace(data=data)
