"""Trial averaging of epochs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import EEGKitError

__all__ = ["ErpResult", "erp_average"]


@dataclass(frozen=True, eq=False)
class ErpResult:
    times: np.ndarray  # ms
    mean: np.ndarray  # channel x time
    sd: np.ndarray
    n_trials: int
    condition: str
    channels: tuple

    def select(self, channels):
        idx = [self.channels.index(c) for c in channels]
        return ErpResult(self.times, self.mean[idx], self.sd[idx], self.n_trials,
                         self.condition, tuple(channels))


def erp_average(ep, condition) -> ErpResult:
    if condition not in ep.conditions:
        raise EEGKitError(f"condition {condition!r} not in epochs ({', '.join(ep.conditions)})")
    trials = ep.conditions[condition]
    if len(trials) < 1:
        raise EEGKitError(f"condition {condition!r} has no trials")
    sd = trials.std(axis=0, ddof=1) if len(trials) > 1 else np.zeros(trials.shape[1:])
    return ErpResult(ep.times * 1000.0, trials.mean(axis=0), sd, len(trials), condition, ep.channels)
