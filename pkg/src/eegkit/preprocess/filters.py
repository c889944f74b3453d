"""Zero-phase windowed-sinc FIR bandpass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..core import EEGKitError, Recording

__all__ = ["FilterSpec", "design_bandpass", "frequency_response", "apply_fir", "bandpass"]

# Hamming window: transition width ~ 3.3 / N cycles per sample.
_HAMMING_TRANSITION_FACTOR = 3.3


@dataclass(frozen=True)
class FilterSpec:
    """Passband edges plus transition widths (Hz) at each edge.

    The -6 dB cutoff sits half a transition width outside each passband edge.
    """

    low_hz: float = 0.3
    high_hz: float = 30.0
    low_transition_hz: float = 0.25
    high_transition_hz: float = 7.5
    design: str = "fir_windowed_sinc"

    def validate(self, rate):
        nyq = rate / 2.0
        if self.design != "fir_windowed_sinc":
            raise EEGKitError(f"unsupported filter design {self.design!r}")
        if self.low_transition_hz <= 0 or self.high_transition_hz <= 0:
            raise EEGKitError("filter transition widths must be positive")
        if not 0 < self.low_hz < self.high_hz < nyq:
            raise EEGKitError(
                f"band {self.low_hz}-{self.high_hz} Hz infeasible at {rate} Hz (need 0 < low < high < {nyq})"
            )
        if self.low_hz - self.low_transition_hz / 2 <= 0:
            raise EEGKitError("low transition too wide: cutoff would fall at or below 0 Hz")
        if self.high_hz + self.high_transition_hz / 2 >= nyq:
            raise EEGKitError("high transition too wide: cutoff would reach Nyquist")
        return self


def design_bandpass(spec: FilterSpec, rate: float) -> np.ndarray:
    """Hamming-windowed sinc taps (odd length, symmetric)."""
    spec.validate(rate)
    tw = min(spec.low_transition_hz, spec.high_transition_hz)
    order = int(np.ceil(_HAMMING_TRANSITION_FACTOR * rate / tw / 2.0)) * 2
    cut = [spec.low_hz - spec.low_transition_hz / 2, spec.high_hz + spec.high_transition_hz / 2]
    return signal.firwin(order + 1, cut, pass_zero=False, window="hamming", fs=rate)


def frequency_response(taps, freqs, rate):
    """Complex response of ``taps`` at ``freqs`` (Hz)."""
    _, h = signal.freqz(taps, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=rate)
    return h


def apply_fir(data, taps):
    """Zero-phase FIR along the last axis with reflection padding at the edges."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] == 0:
        return data.copy()
    half = (len(taps) - 1) // 2
    width = [(0, 0)] * (data.ndim - 1) + [(half, half)]
    mode = "reflect" if data.shape[-1] > 1 else "edge"
    padded = np.pad(data, width, mode=mode)
    kernel = np.asarray(taps).reshape((1,) * (data.ndim - 1) + (-1,))
    return signal.oaconvolve(padded, kernel, mode="valid", axes=-1)


def bandpass(rec: Recording, spec: FilterSpec = FilterSpec()) -> Recording:
    taps = design_bandpass(spec, rec.rate)
    return rec.replace(data=apply_fir(rec.data, taps))
