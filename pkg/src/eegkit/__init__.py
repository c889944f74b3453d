"""Synthetic EEG headband toolkit: simulation, streaming, preprocessing and cluster statistics."""
from .core import (
    DEFAULT_CHANNELS,
    HEADBAND_CHANNELS,
    REFERENCE_CHANNEL,
    AdjacencyGraph,
    EEGKitError,
    EventMarker,
    Montage,
    Recording,
    adjacency,
    standard_montage,
)
from .io import load_recording, save_recording

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CHANNELS", "HEADBAND_CHANNELS", "REFERENCE_CHANNEL", "AdjacencyGraph", "EEGKitError",
    "EventMarker", "Montage", "Recording", "adjacency", "standard_montage",
    "load_recording", "save_recording",
]
