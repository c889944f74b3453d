"""Welch power spectra and band power."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from ..core import EEGKitError

__all__ = ["PsdResult", "welch_psd", "band_power"]


@dataclass(frozen=True, eq=False)
class PsdResult:
    freqs: np.ndarray
    power: np.ndarray  # channel x freq, or subject x channel x freq when stacked
    channels: tuple
    condition: str = ""

    @staticmethod
    def stack(results, condition=None):
        first = results[0]
        for r in results[1:]:
            if r.channels != first.channels or not np.array_equal(r.freqs, first.freqs):
                raise EEGKitError("PSD grids or channel sets differ between subjects")
        return PsdResult(first.freqs, np.stack([r.power for r in results]), first.channels,
                         first.condition if condition is None else condition)


def welch_psd(data, rate, channels=None, window_s=2.0, overlap=0.5, max_freq=30.0, condition=""):
    """Hann-windowed averaged periodogram, one-sided density (uV^2/Hz).

    ``max_freq=None`` keeps the grid up to Nyquist.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    nperseg = int(round(window_s * rate))
    if data.shape[-1] < nperseg:
        raise EEGKitError(
            f"segment of {data.shape[-1]} samples is shorter than the {nperseg}-sample Welch window"
        )
    freqs, pxx = signal.welch(data, fs=rate, window="hann", nperseg=nperseg,
                              noverlap=int(round(overlap * nperseg)), scaling="density",
                              detrend="constant", axis=-1)
    if max_freq is not None:
        sel = freqs <= max_freq + 1e-9
        freqs, pxx = freqs[sel], pxx[..., sel]
    channels = tuple(channels) if channels is not None else tuple(f"ch{i}" for i in range(data.shape[0]))
    return PsdResult(freqs, pxx, channels, condition)


def band_power(psd: PsdResult, band=(8.0, 12.0)):
    """Trapezoidal integral of the density over ``band`` (inclusive grid points)."""
    lo, hi = band
    sel = (psd.freqs >= lo - 1e-9) & (psd.freqs <= hi + 1e-9)
    if lo < psd.freqs[0] - 1e-9 or hi > psd.freqs[-1] + 1e-9:
        raise EEGKitError(f"band {band} outside the frequency grid")
    if sel.sum() < 2:
        raise EEGKitError(f"band {band} covers fewer than two frequency bins")
    return integrate.trapezoid(psd.power[..., sel], psd.freqs[sel], axis=-1)
