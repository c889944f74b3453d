import numpy as np
import pytest

from eegkit.core import DEFAULT_CHANNELS, EEGKitError, Recording, standard_montage
from eegkit.preprocess.spline import interpolate, interpolation_matrix, spline_g

M = standard_montage()


def rec_of(data, channels=DEFAULT_CHANNELS):
    return Recording(500.0, channels, data, (), {})


def test_g_matches_series():
    # direct Legendre recursion as an independent oracle
    x = np.linspace(-1, 1, 11)
    p = [np.ones_like(x), x]
    for n in range(1, 7):
        p.append(((2 * n + 1) * x * p[n] - n * p[n - 1]) / (n + 1))
    ref = sum((2 * n + 1) / (n * (n + 1)) ** 4 * p[n] for n in range(1, 8)) / (4 * np.pi)
    assert np.allclose(spline_g(x), ref)


def test_constant_field_reproduced():
    data = np.full((7, 100), 5.0)
    data[DEFAULT_CHANNELS.index("T7")] = 0
    out = interpolate(rec_of(data), M, ["T7"])
    assert np.abs(out.data[DEFAULT_CHANNELS.index("T7")] - 5.0).max() < 1e-6


def test_good_channels_untouched_and_empty_identity():
    data = np.random.default_rng(0).standard_normal((7, 50))
    r = rec_of(data)
    out = interpolate(r, M, ["TP8"])
    keep = [i for i, c in enumerate(DEFAULT_CHANNELS) if c != "TP8"]
    assert np.array_equal(out.data[keep], r.data[keep])
    assert interpolate(r, M, []) is r


def test_leave_one_out_smooth_field():
    # two low-order (degree 1) spatial patterns with independent time courses
    pos = M.positions(DEFAULT_CHANNELS)
    rng = np.random.default_rng(3)
    t = rng.standard_normal((2, 500))
    data = np.outer(pos @ np.array([1.0, 0.3, 0.5]), t[0]) + np.outer(pos @ np.array([0.2, 1.0, -0.4]), t[1])
    i = DEFAULT_CHANNELS.index("T7")
    truth = data[i].copy()
    data[i] = 0
    est = interpolate(rec_of(data), M, ["T7"]).data[i]
    assert np.corrcoef(est, truth)[0, 1] >= 0.95


def test_idw_fallback_and_errors():
    ch = ("T7", "T8", "Fz")
    data = np.vstack([np.ones(10), 3 * np.ones(10), np.zeros(10)])
    out = interpolate(rec_of(data, ch), M, ["Fz"])
    assert np.allclose(out.data[2], 2.0)  # Fz equidistant from T7 and T8
    with pytest.raises(EEGKitError):
        interpolate(rec_of(data, ch), M, ["Fz", "T8"])
    with pytest.raises(EEGKitError):
        interpolate(rec_of(data, ch), M, ["O1"])


def test_matrix_rows_sum_to_one():
    pos = M.positions(DEFAULT_CHANNELS)
    W = interpolation_matrix(pos[:5], pos[5:])
    assert np.allclose(W.sum(axis=1), 1.0)
