import logging

import numpy as np
import pytest

from eegkit.core import DEFAULT_CHANNELS, EventMarker, Recording
from eegkit.synth import ArtifactSpec, SubjectParams
from eegkit.tasks import OddballConfig, visual_config
from dataclasses import replace


@pytest.fixture(autouse=True)
def _quiet_ica():
    logging.getLogger("eegkit.preprocess.ica").setLevel(logging.ERROR)
    yield


def random_recording(rng, n_channels=3, n_samples=50, n_markers=4, rate=250.0):
    data = rng.normal(0, 20, size=(n_channels, n_samples))
    markers = []
    if n_samples:
        for _ in range(n_markers):
            markers.append(EventMarker(int(rng.integers(0, n_samples)), int(rng.integers(0, 200)),
                                       str(rng.choice(["std", "dev", "x", ""]))))
    labels = [f"C{i}" for i in range(n_channels)]
    return Recording(rate, labels, data, markers, {"subject": "t"})


def short_params(artifacts=None, **kw):
    """Subject parameters with shortened tasks so tests run fast."""
    aud = OddballConfig(n_trials=80, n_blocks=4)
    vis = replace(visual_config(), n_trials=80, n_blocks=4)
    base = dict(eyes_open_s=20.0, eyes_closed_s=20.0, auditory=aud, visual=vis,
                artifacts=artifacts or ArtifactSpec())
    base.update(kw)
    return SubjectParams(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def channels():
    return DEFAULT_CHANNELS


def stream_roundtrip(rec, chunk_samples=100):
    """Serve ``rec`` on an ephemeral port and record it back."""
    from eegkit.stream import StreamServer, record

    with StreamServer(rec, ("127.0.0.1", 0), 0.0, chunk_samples) as srv:
        out = record(srv.endpoint, timeout=10.0)
        srv.wait_clients(1, timeout=10.0)
    return out
