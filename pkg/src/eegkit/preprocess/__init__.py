"""Filtering, bad channels, ICA, interpolation, re-referencing and epoching."""
from .epochs import Epochs, RejectionLog, epoch, reject_epochs, reject_intervals, rereference
from .filters import FilterSpec, bandpass, design_bandpass, frequency_response
from .ica import IcaModel, amari_index, ica_fit, ica_flag_components, ica_remove, ica_sources
from .lof import channel_features, detect_bad_channels, local_outlier_factor
from .pipeline import PipelineConfig, PipelineError, PipelineResult, run_pipeline
from .spline import interpolate

__all__ = [
    "Epochs", "RejectionLog", "epoch", "reject_epochs", "reject_intervals", "rereference",
    "FilterSpec", "bandpass", "design_bandpass", "frequency_response",
    "IcaModel", "amari_index", "ica_fit", "ica_flag_components", "ica_remove", "ica_sources",
    "channel_features", "detect_bad_channels", "local_outlier_factor",
    "PipelineConfig", "PipelineError", "PipelineResult", "run_pipeline",
    "interpolate",
]
