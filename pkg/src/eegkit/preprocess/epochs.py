"""Re-referencing, interval excision, epoching and epoch rejection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import EEGKitError, EventMarker, Recording

__all__ = [
    "rereference",
    "RejectionLog",
    "reject_intervals",
    "kept_mask",
    "Epochs",
    "epoch",
    "reject_epochs",
]


def rereference(rec: Recording, ref) -> Recording:
    """Subtract channel ``ref`` from every channel (``ref`` becomes zero and is kept)."""
    i = rec.index(ref)
    return rec.replace(data=rec.data - rec.data[i][None, :])


@dataclass(frozen=True)
class RejectionLog:
    """Excised sample ranges [start, stop) in the input's sample indices."""

    intervals: tuple = ()
    n_input: int = 0
    dropped_markers: tuple = ()

    @property
    def n_excised(self):
        return sum(b - a for a, b in self.intervals)

    def to_dict(self, rate):
        return {
            "n_intervals": len(self.intervals),
            "intervals_s": [[a / rate, b / rate] for a, b in self.intervals],
            "excised_s": self.n_excised / rate,
            "dropped_markers": len(self.dropped_markers),
        }


def _merge(intervals):
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def kept_mask(log: RejectionLog):
    keep = np.ones(log.n_input, dtype=bool)
    for a, b in log.intervals:
        keep[a:b] = False
    return keep


def reject_intervals(rec: Recording, intervals=(), auto_threshold_uv=None, window_s=1.0):
    """Excise manual ``intervals`` (seconds) and, when ``auto_threshold_uv`` is set,
    every ``window_s`` window whose peak-to-peak exceeds it on any channel.

    Returns ``(recording, RejectionLog)``. Markers inside excised stretches are
    dropped; later markers are shifted to the shortened time base.
    """
    n = rec.n_samples
    spans = []
    for a, b in intervals:
        s0, s1 = int(round(a * rec.rate)), int(round(b * rec.rate))
        if s0 < 0 or s1 > n or s1 <= s0:
            raise EEGKitError(f"interval ({a}, {b}) s outside recording bounds")
        spans.append((s0, s1))
    if auto_threshold_uv is not None and np.isfinite(auto_threshold_uv) and n:
        win = max(1, int(round(window_s * rec.rate)))
        for s0 in range(0, n, win):
            seg = rec.data[:, s0:s0 + win]
            if (seg.max(axis=1) - seg.min(axis=1)).max() > auto_threshold_uv:
                spans.append((s0, min(n, s0 + win)))
    spans = _merge(spans)
    log = RejectionLog(tuple(spans), n)
    if not spans:
        return rec, log
    keep = kept_mask(log)
    if not keep.any():
        raise EEGKitError("no data remaining after interval rejection")
    new_index = np.cumsum(keep) - 1
    markers, dropped = [], []
    for m in rec.markers:
        if keep[m.sample]:
            markers.append(EventMarker(int(new_index[m.sample]), m.code, m.label))
        else:
            dropped.append(m)
    log = RejectionLog(tuple(spans), n, tuple(dropped))
    return rec.replace(data=rec.data[:, keep], markers=markers), log


@dataclass(frozen=True, eq=False)
class Epochs:
    """Stimulus-locked windows per condition, arrays shaped (trial, channel, time)."""

    conditions: dict
    window: tuple
    baseline: tuple
    rate: float
    channels: tuple
    t0_index: int
    # per condition: {"n_markers", "kept", "rejected", "skipped", "samples"}
    bookkeeping: dict = field(default_factory=dict)

    @property
    def times(self):
        n = next(iter(self.conditions.values())).shape[-1]
        return (np.arange(n) - self.t0_index) / self.rate

    def counts(self):
        return {
            c: {k: v for k, v in b.items() if k != "samples"} for c, b in self.bookkeeping.items()
        }


def epoch(rec: Recording, code_map, window=(-0.1, 0.5), baseline=(-0.1, 0.0)):
    """Cut windows [round(tmin*rate), round(tmax*rate)) around each matching marker
    and subtract the per-channel mean over the baseline window."""
    tmin, tmax = window
    bmin, bmax = baseline
    if not tmin < tmax:
        raise EEGKitError("epoch window must have tmin < tmax")
    if not (tmin <= bmin < bmax <= tmax):
        raise EEGKitError("baseline must lie inside the epoch window")
    r = rec.rate
    s_min, s_max = int(round(tmin * r)), int(round(tmax * r))
    b0, b1 = int(round(bmin * r)) - s_min, int(round(bmax * r)) - s_min
    if b1 <= b0:
        raise EEGKitError("baseline window is empty at this sampling rate")
    conditions, book = {}, {}
    for label, codes in code_map.items():
        codes = {codes} if isinstance(codes, (int, np.integer)) else set(codes)
        marks = [m for m in rec.markers if m.code in codes]
        trials, samples, skipped = [], [], 0
        for m in marks:
            a, b = m.sample + s_min, m.sample + s_max
            if a < 0 or b > rec.n_samples:
                skipped += 1
                continue
            seg = rec.data[:, a:b]
            trials.append(seg - seg[:, b0:b1].mean(axis=1, keepdims=True))
            samples.append(m.sample)
        if not trials:
            raise EEGKitError(f"no extractable trials for condition {label!r}")
        conditions[label] = np.stack(trials)
        book[label] = {"n_markers": len(marks), "kept": len(trials), "rejected": 0,
                       "skipped": skipped, "samples": samples}
    return Epochs(conditions, (tmin, tmax), (bmin, bmax), r, rec.channels, -s_min, book)


def reject_epochs(ep: Epochs, threshold_uv=100.0) -> Epochs:
    """Drop trials whose absolute amplitude exceeds ``threshold_uv`` (strictly) anywhere."""
    if threshold_uv <= 0:
        raise EEGKitError("epoch rejection threshold must be positive")
    conditions, book = {}, {}
    for label, arr in ep.conditions.items():
        peak = np.abs(arr).max(axis=(1, 2)) if arr.size else np.zeros(len(arr))
        keep = peak <= threshold_uv
        if not keep.any():
            raise EEGKitError(f"condition {label!r} has no trials left after epoch rejection")
        conditions[label] = arr[keep]
        b = dict(ep.bookkeeping[label])
        b["rejected"] = b["rejected"] + int((~keep).sum())
        b["kept"] = int(keep.sum())
        b["samples"] = [s for s, k in zip(b["samples"], keep) if k]
        book[label] = b
    return Epochs(conditions, ep.window, ep.baseline, ep.rate, ep.channels, ep.t0_index, book)
