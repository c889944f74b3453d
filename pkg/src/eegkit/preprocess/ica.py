"""FastICA (symmetric fixed point, tanh contrast) and artifact-component handling."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.stats import kurtosis

from ..core import EEGKitError, Montage, Recording

__all__ = [
    "IcaModel",
    "fastica",
    "ica_fit",
    "ica_sources",
    "ica_flag_components",
    "ica_remove",
    "amari_index",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IcaModel:
    """Fitted decomposition.

    ``unmixing`` maps centered channel data to sources (components x channels);
    ``mixing`` is its pseudo-inverse (channels x components). ``whitener`` is
    the PCA whitening matrix applied before the rotation.
    """

    channels: tuple
    mean: np.ndarray
    whitener: np.ndarray
    rotation: np.ndarray
    unmixing: np.ndarray
    mixing: np.ndarray
    n_iter: int
    converged: bool
    component_labels: tuple = ()

    @property
    def n_components(self):
        return self.unmixing.shape[0]

    def with_labels(self, rejected):
        rejected = set(rejected)
        labels = tuple("rejected" if i in rejected else "kept" for i in range(self.n_components))
        return IcaModel(self.channels, self.mean, self.whitener, self.rotation,
                        self.unmixing, self.mixing, self.n_iter, self.converged, labels)


def _sym_decorrelate(W):
    s, u = np.linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def fastica(Z, max_iter=500, tol=1e-6, seed=0):
    """Rotation W for whitened data Z (components x samples); returns (W, n_iter, converged)."""
    n = Z.shape[0]
    rng = np.random.default_rng(seed)
    W = _sym_decorrelate(rng.standard_normal((n, n)))
    T = Z.shape[1]
    for it in range(1, max_iter + 1):
        Y = np.tanh(W @ Z)
        gprime = (1.0 - Y ** 2).mean(axis=1)
        W_new = _sym_decorrelate((Y @ Z.T) / T - gprime[:, None] * W)
        change = np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0))
        W = W_new
        if change < tol:
            return W, it, True
    return W, max_iter, False


def ica_fit(rec: Recording, n_components=None, max_iter=500, tol=1e-6, seed=0, channels=None,
            max_fit_samples=None):
    """PCA whitening followed by symmetric FastICA.

    ``channels`` restricts the decomposition to a subset (bad channels left out).
    ``max_fit_samples`` caps the samples used for the fit by taking every k-th
    sample; the model still applies to the full recording.
    """
    channels = tuple(rec.channels if channels is None else channels)
    X = rec.data[[rec.index(c) for c in channels]]
    n_ch, n_samp = X.shape
    n_components = n_ch if n_components is None else int(n_components)
    if not 1 <= n_components <= n_ch:
        raise EEGKitError(f"n_components={n_components} must lie in [1, {n_ch}]")
    if n_samp < 20 * n_ch ** 2:
        log.warning("ICA on %d samples for %d channels; >= %d recommended", n_samp, n_ch, 20 * n_ch ** 2)
    if n_samp <= n_components:
        raise EEGKitError("not enough samples for ICA")
    if max_fit_samples and n_samp > max_fit_samples:
        X = X[:, :: int(np.ceil(n_samp / max_fit_samples))]
        n_samp = X.shape[1]
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    cov = Xc @ Xc.T / n_samp
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = evals[:n_components]
    if top[-1] <= max(evals[0], 1e-300) * 1e-10:
        rank = int((evals > max(evals[0], 1e-300) * 1e-10).sum())
        raise EEGKitError(
            f"data are rank deficient (rank {rank} < {n_components} components); use fewer components"
        )
    K = (evecs[:, :n_components] / np.sqrt(top)).T
    Z = K @ Xc
    W, n_iter, converged = fastica(Z, max_iter, tol, seed)
    if not converged:
        log.warning("FastICA stopped at max_iter=%d without reaching tol=%g", max_iter, tol)
    unmixing = W @ K
    mixing = np.linalg.pinv(unmixing)
    return IcaModel(channels, mean, K, W, unmixing, mixing, n_iter, converged,
                    ("kept",) * n_components)


def ica_sources(model: IcaModel, rec: Recording):
    X = rec.data[[rec.index(c) for c in model.channels]]
    return model.unmixing @ (X - model.mean[:, None])


def ica_flag_components(model: IcaModel, rec: Recording, montage: Montage = None,
                        frontal=("FP1", "FP2"), frontal_share=0.6, low_freq_hz=4.0,
                        low_freq_ratio=0.5, kurtosis_max=20.0):
    """Heuristic artifact flags.

    "blink": frontal-dominant topography and mostly sub-4 Hz power.
    "transient": excess kurtosis above ``kurtosis_max``.
    Returns a dict {component index: [reasons]}.
    """
    S = ica_sources(model, rec)
    front = [i for i, c in enumerate(model.channels) if c in frontal]
    nperseg = int(min(S.shape[1], 4 * rec.rate))
    freqs, pxx = sps.welch(S, fs=rec.rate, nperseg=nperseg)
    total = pxx.sum(axis=1)
    low = pxx[:, freqs < low_freq_hz].sum(axis=1)
    kurt = kurtosis(S, axis=1, fisher=True)
    flags = {}
    for i in range(model.n_components):
        w = np.abs(model.mixing[:, i])
        share = w[front].sum() / w.sum() if w.sum() > 0 else 0.0
        ratio = low[i] / total[i] if total[i] > 0 else 0.0
        reasons = []
        if share > frontal_share and ratio > low_freq_ratio:
            reasons.append("blink")
        if kurt[i] > kurtosis_max:
            reasons.append("transient")
        if reasons:
            flags[i] = reasons
    return flags


def ica_remove(rec: Recording, model: IcaModel, indices) -> Recording:
    """Subtract the back-projection of the listed components.

    Signal outside the retained PCA subspace is left untouched, so removing no
    component is an exact identity.
    """
    indices = sorted(set(int(i) for i in indices))
    for i in indices:
        if not 0 <= i < model.n_components:
            raise EEGKitError(f"component index {i} out of range")
    if not indices:
        return rec
    rows = [rec.index(c) for c in model.channels]
    S = ica_sources(model, rec)[indices]
    data = np.array(rec.data)
    data[rows] -= model.mixing[:, indices] @ S
    return rec.replace(data=data)


def amari_index(W, A):
    """Normalized Amari performance index of P = W @ A (0 = perfect separation)."""
    P = np.abs(np.asarray(W) @ np.asarray(A))
    n = P.shape[0]
    rows = (P / P.max(axis=1, keepdims=True)).sum(axis=1) - 1
    cols = (P / P.max(axis=0, keepdims=True)).sum(axis=0) - 1
    return (rows.sum() + cols.sum()) / (2 * n * (n - 1))
