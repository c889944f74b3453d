"""Task protocols as timed marker schedules.

Onset-to-onset gaps are ``stim_duration + ISI`` with the ISI measured from
stimulus offset to the next onset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MARKER_CODES, EEGKitError, EventMarker, block_code

__all__ = [
    "OddballConfig",
    "Trial",
    "TrialSchedule",
    "auditory_config",
    "visual_config",
    "gen_schedule",
    "eyes_schedule",
    "schedule_to_markers",
    "TASKS",
]

TASKS = ("eyes", "auditory", "visual")


@dataclass(frozen=True)
class OddballConfig:
    n_trials: int = 360
    n_blocks: int = 4
    deviant_fraction: float = 0.2
    stim_duration_ms: float = 100.0
    isi_min_ms: float = 500.0
    isi_max_ms: float = 600.0
    modality: str = "auditory"
    std_descriptor: str = "600Hz"
    dev_descriptor: str = "900Hz"
    lead_in_ms: float = 1000.0
    lead_out_ms: float = 1000.0

    @property
    def block_size(self):
        return self.n_trials // self.n_blocks

    @property
    def deviants_per_block(self):
        return int(round(self.deviant_fraction * self.block_size))

    def validate(self):
        if self.n_trials <= 0:
            raise EEGKitError("n_trials: must be positive")
        if self.n_blocks <= 0 or self.n_trials % self.n_blocks:
            raise EEGKitError(f"n_blocks: n_trials={self.n_trials} is not divisible by n_blocks={self.n_blocks}")
        if not 0 < self.deviant_fraction < 1:
            raise EEGKitError("deviant_fraction: must lie strictly between 0 and 1")
        per_block = self.deviant_fraction * self.block_size
        if abs(per_block - round(per_block)) > 1e-9:
            raise EEGKitError(
                f"deviant_fraction: {self.deviant_fraction} x block size {self.block_size} is not an integer"
            )
        if self.stim_duration_ms <= 0:
            raise EEGKitError("stim_duration_ms: must be positive")
        if self.isi_min_ms < 0 or self.isi_min_ms > self.isi_max_ms:
            raise EEGKitError("isi_min_ms: must satisfy 0 <= isi_min_ms <= isi_max_ms")
        if self.modality not in ("auditory", "visual"):
            raise EEGKitError(f"modality: expected 'auditory' or 'visual', got {self.modality!r}")
        if self.lead_in_ms < 0 or self.lead_out_ms < 0:
            raise EEGKitError("lead_in_ms/lead_out_ms: must be non-negative")
        return self


def auditory_config():
    """600 Hz standards / 900 Hz deviants, 100 ms tones, ISI 500-600 ms."""
    return OddballConfig()


def visual_config():
    """Object standards / face deviants, 300 ms images, ISI 250-350 ms."""
    return OddballConfig(
        stim_duration_ms=300.0, isi_min_ms=250.0, isi_max_ms=350.0,
        modality="visual", std_descriptor="object", dev_descriptor="face",
    )


@dataclass(frozen=True)
class Trial:
    onset_ms: float
    kind: str  # "standard" | "deviant"
    block: int


@dataclass(frozen=True)
class TrialSchedule:
    trials: tuple
    total_duration_ms: float
    config: OddballConfig

    @property
    def onsets_ms(self):
        return np.array([t.onset_ms for t in self.trials])

    @property
    def n_deviants(self):
        return sum(t.kind == "deviant" for t in self.trials)


def gen_schedule(cfg: OddballConfig, seed) -> TrialSchedule:
    """Block-randomised oddball sequence with exact per-block deviant counts."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    size, n_dev = cfg.block_size, cfg.deviants_per_block
    trials = []
    t = cfg.lead_in_ms
    for b in range(cfg.n_blocks):
        kinds = np.zeros(size, dtype=bool)
        kinds[:n_dev] = True
        rng.shuffle(kinds)
        isis = rng.uniform(cfg.isi_min_ms, cfg.isi_max_ms, size)
        for i in range(size):
            trials.append(Trial(float(t), "deviant" if kinds[i] else "standard", b))
            t += cfg.stim_duration_ms + isis[i]
    last = trials[-1].onset_ms
    return TrialSchedule(tuple(trials), last + cfg.stim_duration_ms + cfg.lead_out_ms, cfg)


def eyes_schedule(open_s=60.0, closed_s=60.0, rate=500.0):
    """Eyes-open marker at t=0 and eyes-closed marker at ``open_s``."""
    if open_s <= 0 or closed_s <= 0:
        raise EEGKitError("eyes_schedule: durations must be positive")
    return [
        EventMarker(0, MARKER_CODES["eyes_open"], "eyes_open"),
        EventMarker(int(round(open_s * rate)), MARKER_CODES["eyes_closed"], "eyes_closed"),
    ]


def schedule_to_markers(sched: TrialSchedule, rate):
    if rate <= 0:
        raise EEGKitError("rate must be positive")
    out = []
    seen_blocks = set()
    for tr in sched.trials:
        sample = int(round(tr.onset_ms * rate / 1000.0))
        if tr.block not in seen_blocks:
            seen_blocks.add(tr.block)
            out.append(EventMarker(sample, block_code(tr.block), "block_start"))
        if tr.kind == "deviant":
            out.append(EventMarker(sample, MARKER_CODES["dev"], "dev"))
        else:
            out.append(EventMarker(sample, MARKER_CODES["std"], "std"))
    return out
