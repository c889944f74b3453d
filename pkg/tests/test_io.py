import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegkit.core import EventMarker, Recording
from eegkit.io import (
    DuplicateChannelError,
    MalformedRowError,
    MarkerRangeError,
    MissingFileError,
    load_recording,
    save_recording,
)
from eegkit.synth import SubjectParams, make_subject

from conftest import random_recording, short_params


def test_layout_small(tmp_path):
    r = Recording(100, ["A", "B"], np.arange(8.0).reshape(2, 4))
    save_recording(r, tmp_path / "r")
    sig = (tmp_path / "r" / "signals.csv").read_text().splitlines()
    assert sig[0] == "sample,A,B"
    assert len(sig) == 5 and all(len(row.split(",")) == 3 for row in sig)
    assert (tmp_path / "r" / "markers.csv").read_text() == "sample,code,label\n"
    assert load_recording(tmp_path / "r").equals(r)


def test_synthetic_round_trip(tmp_path):
    r = make_subject("visual", short_params(), seed=3)
    save_recording(r, tmp_path / "s")
    back = load_recording(tmp_path / "s")
    assert back.equals(r, f32=True)
    assert back.markers == r.markers
    assert back.meta == r.meta


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(0, 40), st.integers(0, 6))
def test_round_trip_property(tmp_path_factory, seed, n_ch, n_samp, n_mk):
    rng = np.random.default_rng(seed)
    r = random_recording(rng, n_ch, n_samp, n_mk if n_samp else 0)
    d = tmp_path_factory.mktemp("rt")
    save_recording(r, d)
    back = load_recording(d)
    np.testing.assert_array_equal(back.data, r.data.astype(np.float32).astype(np.float64))
    assert back.markers == r.markers and back.channels == r.channels and back.rate == r.rate


def test_distinct_errors(tmp_path):
    r = Recording(100, ["A", "B"], np.ones((2, 4)), [EventMarker(1, 2, "dev")])
    d = tmp_path / "r"
    save_recording(r, d)
    with pytest.raises(MissingFileError):
        load_recording(tmp_path / "nothing")

    (d / "markers.csv").write_text("sample,code,label\n4,1,std\n")
    with pytest.raises(MarkerRangeError, match="marker out of range"):
        load_recording(d)

    save_recording(r, d)
    lines = (d / "signals.csv").read_text().splitlines()
    lines[3] = lines[3] + ",7"
    (d / "signals.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedRowError, match=r"signals.csv:4"):
        load_recording(d)

    save_recording(r, d)
    (d / "meta.json").write_text('{"rate": 100, "channels": ["A", "A"], "meta": {}}')
    with pytest.raises(DuplicateChannelError):
        load_recording(d)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    r = Recording(100, ["A"], np.ones((1, 3)))
    save_recording(r, tmp_path)
    save_recording(r, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["markers.csv", "meta.json", "signals.csv"]
