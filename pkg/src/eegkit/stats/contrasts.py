"""Task-level contrasts and the detection rules for the three planted effects."""
from __future__ import annotations

import numpy as np

from ..core import EEGKitError
from .cluster import ClusterTestConfig, ClusterTestResult, cluster_permutation_test
from .spectral import PsdResult

__all__ = [
    "alpha_contrast",
    "erp_contrast",
    "alpha_detected",
    "p300_detected",
    "n170_detected",
    "TEMPORAL",
]

TEMPORAL = ("TP7", "T7", "T8", "TP8")


def alpha_contrast(closed: PsdResult, opened: PsdResult, cfg: ClusterTestConfig) -> ClusterTestResult:
    """Eyes-closed minus eyes-open over channel x frequency (stacked PSDs)."""
    if closed.power.ndim != 3 or closed.power.shape != opened.power.shape:
        raise EEGKitError("PSD stacks must share a (subject, channel, freq) shape")
    if not np.array_equal(closed.freqs, opened.freqs) or closed.channels != opened.channels:
        raise EEGKitError("eyes-closed and eyes-open PSDs are on different grids")
    res = cluster_permutation_test(closed.power, opened.power, cfg, closed.channels, closed.freqs)
    res.meta.update({"contrast": "eyes_closed - eyes_open", "axis": "frequency_hz"})
    return res


def erp_contrast(deviant, standard, times_ms, channels, cfg: ClusterTestConfig,
                 latency_range=(-100.0, 500.0)) -> ClusterTestResult:
    """Deviant minus standard over channel x time, restricted to ``latency_range`` (ms).

    ``deviant`` and ``standard`` are per-subject ERP means shaped (subject, channel, time).
    """
    times_ms = np.asarray(times_ms, dtype=float)
    lo, hi = latency_range
    step = np.median(np.diff(times_ms)) if len(times_ms) > 1 else 0.0
    if lo < times_ms[0] - 1e-6 or hi > times_ms[-1] + step + 1e-6:
        raise EEGKitError(
            f"latency range {latency_range} ms outside the epoch grid [{times_ms[0]}, {times_ms[-1]}]"
        )
    sel = (times_ms >= lo - 1e-6) & (times_ms <= hi + 1e-6)
    dev = np.asarray(deviant)[..., sel]
    std = np.asarray(standard)[..., sel]
    res = cluster_permutation_test(dev, std, cfg, tuple(channels), times_ms[sel])
    res.meta.update({"contrast": "deviant - standard", "axis": "time_ms"})
    return res


def _overlaps(lo, hi, window):
    return lo <= window[1] and hi >= window[0]


def alpha_detected(res: ClusterTestResult, band=(8.0, 12.0), min_channels=2, temporal=TEMPORAL):
    """A significant positive cluster holding in-band bins at >= ``min_channels`` temporal channels."""
    inband = (res.points >= band[0]) & (res.points <= band[1])
    for c in res.significant:
        if c.sign <= 0:
            continue
        hits = [ch for i, ch in enumerate(res.channels)
                if ch in temporal and c.mask[i, inband].any()]
        if len(hits) >= min_channels:
            return True
    return False


def _erp_detected(res, sign, window):
    for c in res.significant:
        if c.sign != sign:
            continue
        pts = res.points[c.mask.any(axis=0)]
        if _overlaps(pts.min(), pts.max(), window):
            return True
    return False


def p300_detected(res: ClusterTestResult, window=(370.0, 500.0)):
    return _erp_detected(res, 1, window)


def n170_detected(res: ClusterTestResult, window=(150.0, 200.0)):
    return _erp_detected(res, -1, window)
