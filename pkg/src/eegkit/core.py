"""Domain types and 10-20 montage geometry shared by the whole toolkit.

Amplitudes are microvolts everywhere. Positions live on the unit sphere with
x pointing right, y towards the nasion and z towards the vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "EEGKitError",
    "EventMarker",
    "Recording",
    "Montage",
    "AdjacencyGraph",
    "HEADBAND_CHANNELS",
    "REFERENCE_CHANNEL",
    "DEFAULT_CHANNELS",
    "DEFAULT_RATE",
    "DEFAULT_MAX_ANGLE",
    "MARKER_CODES",
    "block_code",
    "standard_montage",
    "adjacency",
]


class EEGKitError(Exception):
    """Base class for every error raised by eegkit."""


HEADBAND_CHANNELS = ("TP7", "T7", "FP1", "FP2", "T8", "TP8")
REFERENCE_CHANNEL = "Fz"
DEFAULT_CHANNELS = HEADBAND_CHANNELS + (REFERENCE_CHANNEL,)
DEFAULT_RATE = 500.0
DEFAULT_MAX_ANGLE = 0.7

MARKER_CODES = {"std": 1, "dev": 2, "eyes_open": 10, "eyes_closed": 11}
BLOCK_CODE_BASE = 100


def block_code(block):
    return BLOCK_CODE_BASE + int(block)


@dataclass(frozen=True)
class EventMarker:
    sample: int
    code: int
    label: str = ""

    def __post_init__(self):
        if int(self.sample) != self.sample or self.sample < 0:
            raise EEGKitError(f"marker sample must be a non-negative integer, got {self.sample!r}")
        if int(self.code) != self.code or self.code < 0:
            raise EEGKitError(f"marker code must be a non-negative integer, got {self.code!r}")
        object.__setattr__(self, "sample", int(self.sample))
        object.__setattr__(self, "code", int(self.code))


def _readonly(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Recording:
    """Multichannel EEG in microvolts with event markers.

    Parameters
    ----------
    rate : float
        Sampling rate in Hz.
    channels : sequence of str
        Channel labels, one per row of ``data``.
    data : array, shape (n_channels, n_samples)
        Amplitudes in microvolts.
    markers : sequence of EventMarker
        Sorted by sample (a stable sort is applied on construction).
    meta : mapping of str to str
        Free-form annotations (subject id, task, seed).
    """

    rate: float
    channels: tuple
    data: np.ndarray
    markers: tuple = ()
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        rate = float(self.rate)
        if not np.isfinite(rate) or rate <= 0:
            raise EEGKitError(f"rate must be positive, got {self.rate!r}")
        channels = tuple(str(c) for c in self.channels)
        if any(not c for c in channels):
            raise EEGKitError("channel labels must be non-empty")
        if len(set(channels)) != len(channels):
            dupes = sorted({c for c in channels if channels.count(c) > 1})
            raise EEGKitError(f"duplicate channel labels: {', '.join(dupes)}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != len(channels):
            raise EEGKitError(
                f"data must have shape (n_channels={len(channels)}, n_samples), got {data.shape}"
            )
        markers = tuple(sorted(self.markers, key=lambda m: m.sample))
        n = data.shape[1]
        for m in markers:
            if m.sample >= n:
                raise EEGKitError(f"marker out of range: sample {m.sample} >= {n} samples")
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "markers", markers)
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in dict(self.meta).items()})

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return len(self.channels)

    @property
    def duration(self):
        return self.n_samples / self.rate

    def index(self, label):
        try:
            return self.channels.index(label)
        except ValueError:
            raise EEGKitError(f"unknown channel: {label}") from None

    def replace(self, **changes):
        """Return a copy with selected fields swapped out."""
        kw = dict(rate=self.rate, channels=self.channels, data=self.data,
                  markers=self.markers, meta=self.meta)
        kw.update(changes)
        return Recording(**kw)

    def equals(self, other, f32=True):
        """Compare signals (optionally at float32 precision), labels, rate and markers."""
        if not isinstance(other, Recording):
            return False
        if self.rate != other.rate or self.channels != other.channels:
            return False
        if self.markers != other.markers or self.data.shape != other.data.shape:
            return False
        if f32:
            return np.array_equal(self.data.astype(np.float32), other.data.astype(np.float32))
        return np.array_equal(self.data, other.data)


# (angle from vertex, azimuth from the nasion direction) in degrees; positive
# azimuth turns towards the left ear. Equatorial electrodes sit on the
# nasion-inion circumference at 10% steps of the half-arc (18 degrees).
_SPHERICAL_ANGLES = {
    "FPz": (90.0, 0.0),
    "FP1": (90.0, 18.0),
    "FP2": (90.0, -18.0),
    "F7": (90.0, 54.0),
    "F8": (90.0, -54.0),
    "FT7": (90.0, 72.0),
    "FT8": (90.0, -72.0),
    "T7": (90.0, 90.0),
    "T8": (90.0, -90.0),
    "TP7": (90.0, 108.0),
    "TP8": (90.0, -108.0),
    "P7": (90.0, 126.0),
    "P8": (90.0, -126.0),
    "O1": (90.0, 162.0),
    "O2": (90.0, -162.0),
    "Oz": (90.0, 180.0),
    "Fz": (45.0, 0.0),
    "Cz": (0.0, 0.0),
    "Pz": (45.0, 180.0),
    "C3": (45.0, 90.0),
    "C4": (45.0, -90.0),
}
# Row electrodes halfway along the arc between a ring electrode and the midline.
_MIDPOINTS = {
    "F3": ("F7", "Fz"),
    "F4": ("F8", "Fz"),
    "P3": ("P7", "Pz"),
    "P4": ("P8", "Pz"),
}


def _from_angles(incl_deg, az_deg):
    incl, az = np.deg2rad(incl_deg), np.deg2rad(az_deg)
    return np.array([-np.sin(incl) * np.sin(az), np.sin(incl) * np.cos(az), np.cos(incl)])


def _slerp_mid(a, b):
    v = a + b
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class Montage:
    """Channel labels mapped to unit-sphere positions."""

    entries: Mapping[str, np.ndarray]

    def __post_init__(self):
        clean = {}
        for label, pos in dict(self.entries).items():
            v = np.asarray(pos, dtype=np.float64).reshape(3)
            norm = np.linalg.norm(v)
            if norm == 0:
                raise EEGKitError(f"zero position for {label}")
            clean[str(label)] = _readonly(v / norm)
        if len({k.upper() for k in clean}) != len(clean):
            raise EEGKitError("montage labels must be unique (case-insensitively)")
        object.__setattr__(self, "entries", clean)

    @property
    def labels(self):
        return tuple(self.entries)

    def _resolve(self, label):
        if label in self.entries:
            return label
        for key in self.entries:
            if key.upper() == str(label).upper():
                return key
        raise EEGKitError(f"unknown channel label: {label}")

    def __contains__(self, label):
        try:
            self._resolve(label)
        except EEGKitError:
            return False
        return True

    def position(self, label):
        return self.entries[self._resolve(label)]

    def positions(self, labels):
        return np.vstack([self.position(lb) for lb in labels])


def standard_montage():
    """Idealized spherical 10-20 montage (superset of the headband layout)."""
    pos = {k: _from_angles(*v) for k, v in _SPHERICAL_ANGLES.items()}
    for label, (a, b) in _MIDPOINTS.items():
        pos[label] = _slerp_mid(pos[a], pos[b])
    # exact zeros on the midline and equator, so mirror symmetry is bit-exact
    for v in pos.values():
        v[np.abs(v) < 1e-15] = 0.0
    return Montage(pos)


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    nodes: tuple
    edges: np.ndarray

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = np.asarray(self.edges, dtype=bool)
        if edges.shape != (len(nodes), len(nodes)):
            raise EEGKitError("adjacency matrix shape does not match node count")
        if not np.array_equal(edges, edges.T):
            raise EEGKitError("adjacency must be symmetric")
        if edges.diagonal().any():
            raise EEGKitError("adjacency must not contain self-edges")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", _readonly(edges, bool))

    def edge_list(self):
        i, j = np.nonzero(np.triu(self.edges))
        return [(self.nodes[a], self.nodes[b]) for a, b in zip(i, j)]

    def subset(self, labels):
        idx = [self.nodes.index(lb) for lb in labels]
        return AdjacencyGraph(tuple(labels), self.edges[np.ix_(idx, idx)])


def angular_distances(montage: Montage, labels: Sequence[str]) -> np.ndarray:
    pos = montage.positions(labels)
    return np.arccos(np.clip(pos @ pos.T, -1.0, 1.0))


def adjacency(montage: Montage, labels: Sequence[str], max_angle: float = DEFAULT_MAX_ANGLE):
    """Neighbor graph linking channels whose great-circle angle is <= ``max_angle``."""
    if not 0 < max_angle < np.pi:
        raise EEGKitError(f"max_angle must lie in (0, pi), got {max_angle}")
    for lb in labels:
        if lb not in montage:
            raise EEGKitError(f"unknown channel label: {lb}")
    ang = angular_distances(montage, labels)
    edges = ang <= max_angle
    np.fill_diagonal(edges, False)
    return AdjacencyGraph(tuple(labels), edges)
