"""End-to-end preprocessing of one recording.

Order: bandpass -> interval rejection -> bad-channel detection -> ICA fit,
flag and removal (bad channels excluded) -> spherical interpolation ->
re-reference -> epoching and epoch rejection (oddball tasks) or per-condition
Welch spectra (eyes task).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import MARKER_CODES, REFERENCE_CHANNEL, EEGKitError, Montage, Recording, standard_montage
from ..io import atomic_write_bytes, atomic_write_text
from ..stats.spectral import PsdResult, welch_psd
from .epochs import Epochs, epoch, kept_mask, reject_epochs, reject_intervals, rereference
from .filters import FilterSpec, bandpass
from .ica import ica_fit, ica_flag_components, ica_remove
from .lof import detect_bad_channels
from .spline import interpolate

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "PipelineResult",
    "run_pipeline",
    "save_epochs",
    "load_epochs",
    "save_psd",
    "load_psd",
]


class PipelineError(EEGKitError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterSpec = FilterSpec()
    interval_threshold_uv: Optional[float] = 250.0
    manual_intervals: tuple = ()
    lof_k: int = 3
    lof_threshold: float = 2.5
    ica: bool = True
    ica_n_components: Optional[int] = None  # default: good channels - 1
    ica_max_iter: int = 200
    ica_tol: float = 1e-4
    ica_max_fit_samples: Optional[int] = 15000
    ica_seed: int = 0
    frontal_channels: tuple = ("FP1", "FP2")
    blink_frontal_share: float = 0.6
    blink_low_freq_ratio: float = 0.5
    transient_kurtosis: float = 20.0
    reference: str = REFERENCE_CHANNEL
    epoch_window: tuple = (-0.1, 0.5)
    baseline: tuple = (-0.1, 0.0)
    epoch_reject_uv: float = 100.0
    code_map: dict = field(default_factory=lambda: {"std": (MARKER_CODES["std"],),
                                                     "dev": (MARKER_CODES["dev"],)})
    psd_window_s: float = 2.0
    psd_overlap: float = 0.5
    psd_max_freq: float = 30.0


@dataclass(frozen=True, eq=False)
class PipelineResult:
    task: str
    report: dict
    epochs: Optional[Epochs] = None
    psd: Optional[dict] = None  # condition -> PsdResult
    cleaned: Optional[Recording] = None


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except EEGKitError as exc:
        raise PipelineError(name, str(exc)) from exc


def _eyes_masks(rec: Recording, log):
    """Per-condition boolean masks over the excised time base."""
    codes = {MARKER_CODES["eyes_open"]: "eyes_open", MARKER_CODES["eyes_closed"]: "eyes_closed"}
    state = [(m.sample, codes[m.code]) for m in rec.markers if m.code in codes]
    if not state:
        raise EEGKitError("no eyes_open/eyes_closed markers")
    masks = {}
    for k, (start, label) in enumerate(state):
        stop = state[k + 1][0] if k + 1 < len(state) else rec.n_samples
        m = masks.setdefault(label, np.zeros(rec.n_samples, dtype=bool))
        m[start:stop] = True
    keep = kept_mask(log)
    return {label: m[keep] for label, m in masks.items()}


def infer_task(rec: Recording):
    if "task" in rec.meta:
        return rec.meta["task"]
    codes = {m.code for m in rec.markers}
    if MARKER_CODES["eyes_closed"] in codes:
        return "eyes"
    return "auditory"


def run_pipeline(rec: Recording, config: PipelineConfig = PipelineConfig(),
                 montage: Montage = None, task=None, keep_cleaned=False) -> PipelineResult:
    montage = montage or standard_montage()
    task = task or infer_task(rec)
    report = {"task": task, "channels": list(rec.channels), "rate": rec.rate,
              "n_samples_in": rec.n_samples}

    x = _stage("bandpass", bandpass, rec, config.filter)
    report["bandpass"] = asdict(config.filter)

    # original markers (needed for the eyes segments) before excision
    raw_for_masks = x
    x, log = _stage("reject_intervals", reject_intervals, x, config.manual_intervals,
                    config.interval_threshold_uv)
    report["intervals"] = log.to_dict(rec.rate)

    bad, scores = _stage("detect_bad_channels", detect_bad_channels, x, config.lof_k,
                         config.lof_threshold, exclude=(config.reference,),
                         return_scores=True)
    report["bad_channels"] = bad
    report["lof_scores"] = {k: round(v, 4) for k, v in scores.items()}

    ica_rep = {"enabled": bool(config.ica), "removed": [], "reasons": {}}
    if config.ica:
        good = [c for c in x.channels if c not in bad]
        n_comp = config.ica_n_components or max(1, len(good) - 1)
        model = _stage("ica_fit", ica_fit, x, n_comp, config.ica_max_iter, config.ica_tol,
                       config.ica_seed, channels=good,
                       max_fit_samples=config.ica_max_fit_samples)
        flags = _stage("ica_flag_components", ica_flag_components, model, x, montage,
                       config.frontal_channels, config.blink_frontal_share, 4.0,
                       config.blink_low_freq_ratio, config.transient_kurtosis)
        x = _stage("ica_remove", ica_remove, x, model, list(flags))
        ica_rep.update({"n_components": model.n_components, "n_iter": model.n_iter,
                        "converged": model.converged, "removed": sorted(flags),
                        "reasons": {str(k): v for k, v in sorted(flags.items())}})
    report["ica"] = ica_rep

    x = _stage("interpolate", interpolate, x, montage, bad)
    report["interpolated"] = list(bad)
    x = _stage("rereference", rereference, x, config.reference)
    report["reference"] = config.reference

    result = dict(task=task, report=report, cleaned=x if keep_cleaned else None)
    if task == "eyes":
        masks = _stage("segment", _eyes_masks, raw_for_masks, log)
        psd = {}
        for label, m in masks.items():
            psd[label] = _stage("welch_psd", welch_psd, x.data[:, m], x.rate, x.channels,
                                config.psd_window_s, config.psd_overlap, config.psd_max_freq,
                                label)
        report["psd"] = {label: {"n_samples": int(m.sum())} for label, m in masks.items()}
        return PipelineResult(psd=psd, **result)

    ep = _stage("epoch", epoch, x, config.code_map, config.epoch_window, config.baseline)
    ep = _stage("reject_epochs", reject_epochs, ep, config.epoch_reject_uv)
    report["epochs"] = ep.counts()
    report["trials_rejected"] = sum(v["rejected"] for v in report["epochs"].values())
    return PipelineResult(epochs=ep, **result)


def _npz_bytes(**arrays):
    import io as _io
    buf = _io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def save_epochs(ep: Epochs, path):
    meta = {"window": list(ep.window), "baseline": list(ep.baseline), "rate": ep.rate,
            "channels": list(ep.channels), "t0_index": ep.t0_index,
            "bookkeeping": ep.bookkeeping, "conditions": list(ep.conditions)}
    arrays = {f"cond_{k}": v.astype(np.float32) for k, v in ep.conditions.items()}
    atomic_write_bytes(path, _npz_bytes(meta=np.array(json.dumps(meta, sort_keys=True)), **arrays))


def load_epochs(path) -> Epochs:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        conditions = {k: z[f"cond_{k}"].astype(np.float64) for k in meta["conditions"]}
    return Epochs(conditions, tuple(meta["window"]), tuple(meta["baseline"]), meta["rate"],
                  tuple(meta["channels"]), meta["t0_index"], meta["bookkeeping"])


def save_psd(psd: dict, path):
    first = next(iter(psd.values()))
    meta = {"channels": list(first.channels), "conditions": list(psd)}
    arrays = {f"power_{k}": v.power for k, v in psd.items()}
    atomic_write_bytes(path, _npz_bytes(meta=np.array(json.dumps(meta)), freqs=first.freqs, **arrays))


def load_psd(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        freqs = z["freqs"]
        return {k: PsdResult(freqs, z[f"power_{k}"], tuple(meta["channels"]), k)
                for k in meta["conditions"]}
