"""Synthetic EEG with planted ground-truth effects.

Every ``inject_*`` function is additive: it returns ``rec + effect`` where the
effect depends only on its own parameters (bad channels are the one exception:
their content is replaced).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .core import (
    DEFAULT_CHANNELS,
    DEFAULT_RATE,
    MARKER_CODES,
    EEGKitError,
    EventMarker,
    Recording,
)
from .tasks import (
    OddballConfig,
    auditory_config,
    eyes_schedule,
    gen_schedule,
    schedule_to_markers,
    visual_config,
)

__all__ = [
    "NoiseSpec",
    "AlphaSpec",
    "ErpTemplate",
    "ArtifactSpec",
    "Variability",
    "SubjectParams",
    "gen_noise",
    "inject_alpha",
    "erp_waveform",
    "inject_erp",
    "blink_waveform",
    "blink_onsets",
    "inject_artifacts",
    "make_subject",
    "subject_blink_onsets",
]

_TEMPORAL = {"TP7": 1.0, "T7": 1.0, "T8": 1.0, "TP8": 1.0}


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "white"
    sigma: float = 10.0
    seed: int = 0
    # log-normal spread of per-channel noise SD (electrode-to-electrode variation)
    channel_spread: float = 0.0

    def __post_init__(self):
        if self.kind not in ("white", "pink"):
            raise EEGKitError(f"noise kind must be 'white' or 'pink', got {self.kind!r}")
        if self.sigma < 0 or self.channel_spread < 0:
            raise EEGKitError("noise sigma and channel_spread must be non-negative")


@dataclass(frozen=True)
class AlphaSpec:
    freq: float = 10.0
    amplitude_open: float = 4.0
    amplitude_closed: float = 8.0
    channel_gains: Mapping[str, float] = field(
        default_factory=lambda: {**_TEMPORAL, "FP1": 0.6, "FP2": 0.6, "Fz": 0.1}
    )
    phase: float = 0.0

    def __post_init__(self):
        if self.freq <= 0:
            raise EEGKitError("alpha freq must be positive")
        if self.amplitude_open < 0 or self.amplitude_closed < 0:
            raise EEGKitError("alpha amplitudes must be non-negative")


@dataclass(frozen=True)
class ErpTemplate:
    """Gaussian ERP bump; ``width_ms`` is the full width at half maximum."""

    kind: str = "p300"
    latency_peak_ms: float = 450.0
    width_ms: float = 60.0
    amplitude: float = 4.0
    channel_gains: Mapping[str, float] = field(
        default_factory=lambda: {**_TEMPORAL, "FP1": 0.6, "FP2": 0.6}
    )

    def __post_init__(self):
        if self.kind not in ("p300", "n170"):
            raise EEGKitError(f"ERP kind must be 'p300' or 'n170', got {self.kind!r}")
        if self.width_ms <= 0:
            raise EEGKitError("ERP width must be positive")
        if self.kind == "p300" and self.amplitude < 0:
            raise EEGKitError("p300 amplitude must be positive (or zero for a null plant)")
        if self.kind == "n170" and self.amplitude > 0:
            raise EEGKitError("n170 amplitude must be negative (or zero for a null plant)")

    @classmethod
    def p300(cls, **kw):
        return cls(**kw)

    @classmethod
    def n170(cls, **kw):
        base = dict(
            kind="n170", latency_peak_ms=175.0, width_ms=25.0, amplitude=-5.0,
            channel_gains={**_TEMPORAL, "FP1": 0.3, "FP2": 0.3},
        )
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class ArtifactSpec:
    blink_rate: float = 0.0  # per minute
    blink_amplitude: float = 100.0
    blink_channels: tuple = ()
    bad_channels: tuple = ()
    bad_noise_sigma: float = 50.0
    blink_gains: Mapping[str, float] = field(
        default_factory=lambda: {"FP1": 1.0, "FP2": 1.0, "Fz": 0.3}
    )
    default_blink_gain: float = 0.15

    def __post_init__(self):
        if min(self.blink_rate, self.blink_amplitude, self.bad_noise_sigma) < 0:
            raise EEGKitError("artifact rates and amplitudes must be non-negative")
        object.__setattr__(self, "blink_channels", tuple(self.blink_channels))
        object.__setattr__(self, "bad_channels", tuple(self.bad_channels))

    def gain(self, label):
        return self.blink_gains.get(label, self.default_blink_gain)

    @classmethod
    def dirty(cls, bad_channels=("TP8",), **kw):
        """Blinks on every default channel plus the given bad channels."""
        base = dict(blink_rate=12.0, blink_channels=DEFAULT_CHANNELS, bad_channels=bad_channels)
        base.update(kw)
        return cls(**base)


def _n_samples(duration_s, rate):
    if duration_s <= 0 or rate <= 0:
        raise EEGKitError("duration and rate must be positive")
    return int(round(duration_s * rate))


def _pink(rng, shape):
    white = rng.standard_normal(shape)
    spec = np.fft.rfft(white, axis=-1)
    f = np.fft.rfftfreq(shape[-1])
    scale = np.zeros_like(f)
    scale[1:] = 1.0 / np.sqrt(f[1:])
    x = np.fft.irfft(spec * scale, n=shape[-1], axis=-1)
    sd = x.std(axis=-1, keepdims=True)
    return x / np.where(sd > 0, sd, 1.0)


def gen_noise(channels, duration_s, rate, spec: NoiseSpec = NoiseSpec()) -> Recording:
    """Background noise with per-sample SD ``spec.sigma`` (before channel spread)."""
    n = _n_samples(duration_s, rate)
    channels = tuple(channels)
    rng = np.random.default_rng(spec.seed)
    shape = (len(channels), n)
    x = rng.standard_normal(shape) if spec.kind == "white" else _pink(rng, shape)
    gains = np.exp(spec.channel_spread * rng.standard_normal(len(channels)))[:, None]
    return Recording(rate, channels, spec.sigma * gains * x, (), {})


def _gain_vector(channels, gains):
    return np.array([float(gains.get(c, 0.0)) for c in channels])


def inject_alpha(rec: Recording, spec: AlphaSpec, closed_intervals=()) -> Recording:
    """Add a phase-continuous alpha carrier, stronger inside ``closed_intervals`` (seconds)."""
    n = rec.n_samples
    ivs = sorted((float(a), float(b)) for a, b in closed_intervals)
    for a, b in ivs:
        if a < 0 or b > rec.duration + 1e-9 or b <= a:
            raise EEGKitError(f"closed interval ({a}, {b}) outside recording of {rec.duration} s")
    for (a0, b0), (a1, _) in zip(ivs, ivs[1:]):
        if a1 < b0:
            raise EEGKitError(f"overlapping closed intervals at {a1} s")
    amp = np.full(n, spec.amplitude_open)
    for a, b in ivs:
        amp[int(round(a * rec.rate)):int(round(b * rec.rate))] = spec.amplitude_closed
    t = np.arange(n) / rec.rate
    carrier = amp * np.sin(2 * np.pi * spec.freq * t + spec.phase)
    g = _gain_vector(rec.channels, spec.channel_gains)
    return rec.replace(data=rec.data + g[:, None] * carrier[None, :])


def erp_waveform(template: ErpTemplate, rate) -> np.ndarray:
    """Template sampled on [0, 0.5] s at ``rate``."""
    if rate <= 0:
        raise EEGKitError("rate must be positive")
    t_ms = np.arange(int(round(0.5 * rate)) + 1) / rate * 1000.0
    sigma = template.width_ms / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    return template.amplitude * np.exp(-0.5 * ((t_ms - template.latency_peak_ms) / sigma) ** 2)


def _add_at(data, onsets, wave, gains):
    n = data.shape[1]
    for s in onsets:
        stop = min(n, s + len(wave))
        data[:, s:stop] += gains[:, None] * wave[None, : stop - s]


def inject_erp(rec: Recording, template: ErpTemplate, markers=None, target_code=MARKER_CODES["dev"]):
    """Add the template at every marker whose code equals ``target_code``."""
    markers = rec.markers if markers is None else markers
    onsets = [m.sample for m in markers if m.code == target_code]
    for s in onsets:
        if not 0 <= s < rec.n_samples:
            raise EEGKitError(f"marker at sample {s} outside recording")
    if not onsets:
        return rec
    data = np.array(rec.data)
    wave = erp_waveform(template, rec.rate)
    _add_at(data, onsets, wave, _gain_vector(rec.channels, template.channel_gains))
    return rec.replace(data=data)


def blink_waveform(amplitude, rate, duration_s=0.4):
    """Biphasic raised-cosine blink: positive lobe (62.5%) then a quarter-height negative lobe."""
    n = max(2, int(round(duration_s * rate)))
    n_pos = int(round(0.625 * n))
    pos = 0.5 * (1 - np.cos(2 * np.pi * np.arange(n_pos) / n_pos))
    neg = -0.25 * 0.5 * (1 - np.cos(2 * np.pi * np.arange(n - n_pos) / (n - n_pos)))
    return amplitude * np.concatenate([pos, neg])


def blink_onsets(spec: ArtifactSpec, n_samples, rate, seed):
    """Poisson blink onsets (sample indices) that fit entirely inside the recording."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    if spec.blink_rate <= 0:
        return np.zeros(0, dtype=int)
    mean_gap = 60.0 / spec.blink_rate * rate
    width = int(round(0.4 * rate))
    onsets, t = [], rng.exponential(mean_gap)
    while t + width < n_samples:
        onsets.append(int(t))
        t += rng.exponential(mean_gap)
    return np.array(onsets, dtype=int)


def inject_artifacts(rec: Recording, spec: ArtifactSpec, seed=0) -> Recording:
    for lb in spec.blink_channels + spec.bad_channels:
        if lb not in rec.channels:
            raise EEGKitError(f"unknown channel: {lb}")
    data = np.array(rec.data)
    if spec.blink_rate > 0 and spec.blink_channels:
        gains = np.array([spec.gain(c) if c in spec.blink_channels else 0.0 for c in rec.channels])
        onsets = blink_onsets(spec, rec.n_samples, rec.rate, seed)
        _add_at(data, onsets, blink_waveform(spec.blink_amplitude, rec.rate), gains)
    if spec.bad_channels:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
        for lb in spec.bad_channels:
            data[rec.index(lb)] = spec.bad_noise_sigma * rng.standard_normal(rec.n_samples)
    return rec.replace(data=data)


@dataclass(frozen=True)
class Variability:
    """Between-subject variation of the planted effects."""

    amplitude_sd: float = 0.25  # log-normal SD of effect amplitude
    p300_latency_sd_ms: float = 15.0
    n170_latency_sd_ms: float = 8.0
    alpha_freq_sd: float = 0.4


@dataclass(frozen=True)
class SubjectParams:
    rate: float = DEFAULT_RATE
    channels: tuple = DEFAULT_CHANNELS
    noise: NoiseSpec = NoiseSpec(channel_spread=0.15)
    alpha: AlphaSpec = AlphaSpec()
    p300: ErpTemplate = ErpTemplate.p300()
    n170: ErpTemplate = ErpTemplate.n170()
    artifacts: ArtifactSpec = ArtifactSpec()
    variability: Variability = Variability()
    eyes_open_s: float = 60.0
    eyes_closed_s: float = 60.0
    auditory: OddballConfig = field(default_factory=auditory_config)
    visual: OddballConfig = field(default_factory=visual_config)


def _jitter_template(tpl, rng, amp_sd, lat_sd):
    factor = np.exp(amp_sd * rng.standard_normal())
    lat = tpl.latency_peak_ms + lat_sd * rng.standard_normal()
    return replace(tpl, amplitude=tpl.amplitude * factor, latency_peak_ms=lat)


def make_subject(task, params: SubjectParams = SubjectParams(), seed=0, schedule_seed: Optional[int] = None):
    """Assemble one synthetic subject for ``task`` (eyes | auditory | visual)."""
    ss = np.random.SeedSequence(seed)
    s_noise, s_alpha, s_var, _, s_sched = ss.spawn(5)
    if schedule_seed is None:
        schedule_seed = s_sched
    rate, var = params.rate, params.variability
    rng_alpha = np.random.default_rng(s_alpha)
    rng_var = np.random.default_rng(s_var)
    alpha_factor = np.exp(var.amplitude_sd * rng_alpha.standard_normal())
    alpha = replace(
        params.alpha,
        freq=params.alpha.freq + var.alpha_freq_sd * rng_alpha.standard_normal(),
        amplitude_open=params.alpha.amplitude_open,
        amplitude_closed=params.alpha.amplitude_open
        + (params.alpha.amplitude_closed - params.alpha.amplitude_open) * alpha_factor,
        phase=rng_alpha.uniform(0, 2 * np.pi),
    )
    noise_seed = int(s_noise.generate_state(1, dtype=np.uint64)[0])
    noise = replace(params.noise, seed=noise_seed)

    if task == "eyes":
        duration = params.eyes_open_s + params.eyes_closed_s
        markers = eyes_schedule(params.eyes_open_s, params.eyes_closed_s, rate)
        closed = [(params.eyes_open_s, duration)]
        template, lat_sd = None, 0.0
    elif task in ("auditory", "visual"):
        cfg = params.auditory if task == "auditory" else params.visual
        sched = gen_schedule(cfg, schedule_seed)
        duration = sched.total_duration_ms / 1000.0
        markers = schedule_to_markers(sched, rate)
        closed = []
        if task == "auditory":
            template, lat_sd = params.p300, var.p300_latency_sd_ms
        else:
            template, lat_sd = params.n170, var.n170_latency_sd_ms
    else:
        raise EEGKitError(f"unknown task {task!r}; expected eyes, auditory or visual")

    rec = gen_noise(params.channels, duration, rate, noise)
    rec = rec.replace(markers=markers)
    rec = inject_alpha(rec, alpha, closed)
    if template is not None:
        template = _jitter_template(template, rng_var, var.amplitude_sd, lat_sd)
        rec = inject_erp(rec, template, target_code=MARKER_CODES["dev"])
    rec = inject_artifacts(rec, params.artifacts, _artifact_seed(seed))
    return rec.replace(meta={"task": task, "seed": str(seed)})


def _artifact_seed(seed):
    s_art = np.random.SeedSequence(seed).spawn(5)[3]
    return int(s_art.generate_state(1, dtype=np.uint64)[0])


def subject_blink_onsets(rec: Recording, params: SubjectParams, seed):
    """Ground-truth blink onsets planted by ``make_subject(task, params, seed)``."""
    return blink_onsets(params.artifacts, rec.n_samples, rec.rate, _artifact_seed(seed))
