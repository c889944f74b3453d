from dataclasses import replace

import numpy as np
import pytest
from scipy import signal

from eegkit.core import DEFAULT_CHANNELS, EEGKitError, Recording
from eegkit.preprocess.ica import (amari_index, ica_fit, ica_flag_components, ica_remove,
                                   ica_sources)
from eegkit.synth import ArtifactSpec, NoiseSpec, gen_noise, inject_artifacts

RATE = 500.0


def mixture(seed, n_sources=4, n_samples=20000):
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / RATE
    pool = [np.sin(2 * np.pi * 10 * t), signal.square(2 * np.pi * 3 * t),
            rng.laplace(size=n_samples), rng.uniform(-1, 1, n_samples)]
    S = np.vstack(pool[:n_sources])
    A = rng.standard_normal((n_sources, n_sources))
    labels = tuple(f"C{i}" for i in range(n_sources))
    return S, A, Recording(RATE, labels, A @ S, (), {})


def test_amari_index_oracle():
    P = np.array([[0, 2.0, 0], [0, 0, -1.0], [3.0, 0, 0]])
    assert amari_index(P, np.eye(3)) == 0.0
    assert amari_index(np.ones((2, 2)), np.eye(2)) == pytest.approx(1.0)


def test_two_source_separation():
    S, A, rec = mixture(0, 2)
    model = ica_fit(rec, seed=1)
    est = ica_sources(model, rec)
    C = np.abs(np.corrcoef(np.vstack([S, est]))[:2, 2:])
    assert np.all(C.max(axis=1) >= 0.99)
    assert sorted(C.argmax(axis=1)) == [0, 1]


@pytest.mark.parametrize("seed", range(5))
def test_four_source_amari(seed):
    _, A, rec = mixture(seed)
    model = ica_fit(rec, seed=seed)
    assert model.converged
    assert amari_index(model.unmixing, A) <= 0.1


def test_model_invariants():
    _, _, rec = mixture(2)
    model = ica_fit(rec, n_components=3)
    assert np.abs(model.unmixing @ model.mixing - np.eye(3)).max() <= 1e-6
    assert model.mixing.shape == (4, 3)


def test_remove_none_and_all():
    _, _, rec = mixture(3)
    model = ica_fit(rec)
    assert np.abs(ica_remove(rec, model, []).data - rec.data).max() <= 1e-6
    out = ica_remove(rec, model, range(4))
    assert np.allclose(out.data, model.mean[:, None], atol=1e-6)
    with pytest.raises(EEGKitError):
        ica_remove(rec, model, [4])


def test_remove_linear_for_fixed_model():
    _, _, rec = mixture(4)
    model = replace(ica_fit(rec), mean=np.zeros(4))
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, 4, 3000))
    f = lambda d: ica_remove(rec.replace(data=d), model, [0, 2]).data
    assert np.allclose(f(2 * x - 3 * y), 2 * f(x) - 3 * f(y), rtol=1e-6, atol=1e-9)


def test_rank_deficient_error():
    _, _, rec = mixture(5, 2)
    dup = rec.replace(data=np.vstack([rec.data, rec.data[:1]]), channels=("A", "B", "C"))
    with pytest.raises(EEGKitError, match="fewer components"):
        ica_fit(dup)


def test_subsampled_fit_applies_to_full_data():
    _, A, rec = mixture(6, n_samples=40000)
    model = ica_fit(rec, max_fit_samples=10000)
    assert ica_sources(model, rec).shape == (4, 40000)
    assert amari_index(model.unmixing, A) <= 0.1


def test_blinks_flagged():
    rec = gen_noise(DEFAULT_CHANNELS, 60, RATE, NoiseSpec(seed=1, channel_spread=0.15))
    rec = inject_artifacts(rec, ArtifactSpec(blink_rate=15, blink_channels=DEFAULT_CHANNELS), 2)
    model = ica_fit(rec, n_components=6)
    flags = ica_flag_components(model, rec)
    assert any("blink" in r for r in flags.values())
    assert set(flags) <= set(range(model.n_components))


def test_stationary_noise_rarely_flagged():
    flagged = 0
    for seed in range(100):
        rec = gen_noise(DEFAULT_CHANNELS, 10, RATE, NoiseSpec(kind="pink", seed=seed, channel_spread=0.15))
        model = ica_fit(rec, n_components=6, max_iter=100, tol=1e-3, seed=seed)
        flagged += bool(ica_flag_components(model, rec))
    assert flagged < 5
