"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy criteria (planted and null studies) take roughly 25 minutes on a
single core.
"""
import logging
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import signal, stats

from eegkit.config import load_config
from eegkit.core import DEFAULT_CHANNELS, Recording, adjacency, standard_montage
from eegkit.preprocess.filters import FilterSpec, bandpass, design_bandpass, frequency_response
from eegkit.preprocess.ica import amari_index, ica_fit, ica_flag_components, ica_remove
from eegkit.preprocess.pipeline import run_pipeline
from eegkit.stats.cluster import ClusterTestConfig, cluster_permutation_test
from eegkit.stats.spectral import band_power, welch_psd
from eegkit.stream import FrameError, StreamDecoder, decode_frame, encode_frame, recording_frames
from eegkit.study import run_study
from eegkit.synth import ArtifactSpec, SubjectParams, make_subject, subject_blink_onsets
from eegkit.tasks import auditory_config, gen_schedule, schedule_to_markers, visual_config

from conftest import random_recording, stream_roundtrip
from test_cluster import brute_force_p

N_PLANTED = 100
N_NULL = 200
TEMPORAL = ("TP7", "T7", "T8", "TP8")


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(autouse=True)
def _quiet():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


def _seeded(cfg, seed):
    return replace(cfg, study=replace(cfg.study, seed=seed))


@pytest.fixture(scope="module")
def planted_runs():
    """Default planted study for seeds 0..N-1: {task: [(detected, seconds)]}."""
    logging.disable(logging.WARNING)
    cfg = load_config()
    out = {t: [] for t in ("eyes", "auditory", "visual")}
    for seed in range(N_PLANTED):
        for task in out:
            t0 = time.monotonic()
            res = run_study(_seeded(cfg, seed), (task,))[task]
            out[task].append((bool(res[2]), time.monotonic() - t0))
    return out


def _planted(capsys, planted_runs, number, task, effect):
    runs = planted_runs[task]
    hits = sum(d for d, _ in runs)
    ok = hits >= 95 * N_PLANTED // 100
    report(capsys, number, ok, f"{effect} detected in {hits}/{N_PLANTED} seeded studies (need >= 95)")
    return ok


def test_c01_alpha_effect(capsys, planted_runs):
    ok = _planted(capsys, planted_runs, 1, "eyes", "alpha")
    # every study runs all three tasks; the criterion's budget covers one full study
    per_study = [sum(planted_runs[t][i][1] for t in planted_runs) for i in range(N_PLANTED)]
    slowest = max(per_study)
    with capsys.disabled():
        print(f"ACCEPTANCE  1 runtime: slowest full study {slowest:.1f} s (limit 60 s)")
    assert ok
    assert slowest <= 60.0


def test_c02_p300_effect(capsys, planted_runs):
    assert _planted(capsys, planted_runs, 2, "auditory", "P300")


def test_c03_n170_effect(capsys, planted_runs):
    assert _planted(capsys, planted_runs, 3, "visual", "N170")


def test_c04_null_calibration(capsys):
    base = load_config()
    synth = base.synth
    synth = replace(synth, alpha=replace(synth.alpha, amplitude_closed=synth.alpha.amplitude_open),
                    p300=replace(synth.p300, amplitude=0.0), n170=replace(synth.n170, amplitude=0.0))
    cfg = replace(base, synth=synth)
    hits = tests = 0
    for k in range(N_NULL):
        res = run_study(_seeded(cfg, 10_000 + k))
        for task, (_, result, detected, _) in res.items():
            tests += 1
            hits += bool(result.significant)
            assert not detected or result.significant
    rate = hits / tests
    ok = 0.02 <= rate <= 0.08
    report(capsys, 4, ok, f"null rate {rate:.4f} ({hits}/{tests} cluster tests, need [0.02, 0.08])")
    assert ok


def _random_instance(rng, n, C, T):
    A = rng.standard_normal((n, C, T))
    B = rng.standard_normal((n, C, T))
    c0, t0 = int(rng.integers(0, C)), int(rng.integers(0, T - 4))
    A[:, c0, t0:t0 + 4] += rng.uniform(0.5, 2.0)
    return A, B


def test_c05_permutation_oracle(capsys):
    ch = DEFAULT_CHANNELS[:6]
    adj = adjacency(standard_montage(), ch)
    rng = np.random.default_rng(2024)
    compared = outside = 0
    for i in range(20):
        A, B = _random_instance(rng, 5, 6, 12)
        ex = cluster_permutation_test(A, B, ClusterTestConfig(adj))
        mc = cluster_permutation_test(A, B, ClusterTestConfig(adj, n_permutations=1000, seed=i,
                                                              exact_when_feasible=False))
        assert ex.exact and ex.n_permutations == 32 and not mc.exact
        for ce in ex.clusters:
            cm = next(c for c in mc.clusters if c.mass == pytest.approx(ce.mass, rel=1e-12))
            count = round(cm.p_value * 1001) - 1
            lo, hi = stats.binom.ppf([0.005, 0.995], 1000, ce.p_value)
            compared += 1
            outside += not lo <= count <= hi
    mismatched = []
    adj4 = adj.subset(ch[:4])
    for n in (5, 8, 10, 12):
        A, B = _random_instance(rng, n, 4, 8)
        res = cluster_permutation_test(A, B, ClusterTestConfig(adj4))
        ref = brute_force_p(A, B, adj4.edges)
        got = sorted((c.p_value, c.mass) for c in res.clusters)
        same = res.exact and res.n_permutations == 2 ** n and len(got) == len(ref) and all(
            p1 == p2 and m1 == pytest.approx(m2, rel=1e-9) for (p1, m1), (p2, m2) in zip(got, ref))
        if not same:
            mismatched.append(n)
    A, B = _random_instance(rng, 13, 4, 8)
    assert not cluster_permutation_test(A, B, ClusterTestConfig(adj4)).exact
    ok = outside == 0 and compared > 0 and not mismatched
    report(capsys, 5, ok, f"MC inside 99% CI for {compared - outside}/{compared} clusters; "
                          f"exact == brute force for n in (5, 8, 10, 12): {not mismatched}")
    assert ok


def test_c06_filter_spec(capsys):
    rate = 500.0
    taps = design_bandpass(FilterSpec(), rate)
    db = 20 * np.log10(np.abs(frequency_response(taps, [0.05, 10.0, 45.0], rate)))
    t = np.arange(int(30 * rate)) / rate
    x = np.sin(2 * np.pi * 10 * t)
    y = bandpass(Recording(rate, ("C0",), x[None, :], (), {})).data[0]
    mid = slice(5000, 10000)
    lags = np.arange(-25, 26)
    xc = [np.dot(x[mid], np.roll(y, -k)[mid]) for k in lags]
    lag = int(lags[int(np.argmax(xc))])
    ok = abs(db[1]) <= 0.5 and db[2] <= -40 and db[0] <= -40 and lag == 0
    report(capsys, 6, ok, f"10 Hz {db[1]:+.3f} dB, 45 Hz {db[2]:.1f} dB, 0.05 Hz {db[0]:.1f} dB, lag {lag}")
    assert ok


def _mixture(seed, n_samples=20000, rate=500.0):
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / rate
    S = np.vstack([np.sin(2 * np.pi * 10 * t), signal.square(2 * np.pi * 3 * t),
                   rng.laplace(size=n_samples), rng.uniform(-1, 1, n_samples)])
    A = rng.standard_normal((4, 4))
    return A, Recording(rate, ("C0", "C1", "C2", "C3"), A @ S, (), {})


def test_c07_ica_separation(capsys):
    good = 0
    for seed in range(20):
        A, rec = _mixture(seed)
        good += amari_index(ica_fit(rec, seed=seed).unmixing, A) <= 0.1

    blinky = SubjectParams(artifacts=ArtifactSpec(blink_rate=12.0, blink_channels=DEFAULT_CHANNELS))
    frontal = ("FP1", "FP2")
    ratios, changes = [], []
    for seed in range(10):
        rec = bandpass(make_subject("eyes", blinky, seed))
        model = ica_fit(rec, n_components=len(rec.channels) - 1, seed=0)
        out = ica_remove(rec, model, sorted(ica_flag_components(model, rec)))
        w = int(0.4 * rec.rate)
        fr = [rec.index(c) for c in frontal]
        onsets = [o for o in subject_blink_onsets(rec, blinky, seed) if o + w <= rec.n_samples]
        p2p = lambda r: np.mean([np.ptp(r.data[fr, o:o + w], axis=1).mean() for o in onsets])
        ratios.append(p2p(rec) / p2p(out))
        tem = [rec.index(c) for c in TEMPORAL]
        bp = lambda r: band_power(welch_psd(r.data[tem], r.rate, TEMPORAL)).mean()
        changes.append(abs(bp(out) / bp(rec) - 1))
    ok = good >= 18 and min(ratios) >= 5 and max(changes) < 0.10
    report(capsys, 7, ok, f"Amari <= 0.1 in {good}/20 runs; blink p2p reduced >= {min(ratios):.1f}x; "
                          f"alpha power change <= {100 * max(changes):.1f}% (10 subjects)")
    assert ok


def test_c08_protocol_integrity(capsys):
    rng = np.random.default_rng(8)
    recs = [random_recording(rng, 3, 1, 0), random_recording(rng, 7, 1, 2),
            random_recording(rng, 2, 400, 0)]
    while len(recs) < 100:
        recs.append(random_recording(rng, int(rng.integers(1, 8)), int(rng.integers(1, 3000)),
                                     int(rng.integers(0, 12))))
    identical = 0
    for rec in recs:
        out = stream_roundtrip(rec, int(rng.integers(1, 300)))
        identical += (out.equals(rec) and out.markers == rec.markers and out.meta == rec.meta
                      and out.data.dtype == np.float64
                      and np.array_equal(out.data, rec.data.astype(np.float32)))
    valid = b"".join(encode_frame(f) for f, _ in recording_frames(recs[-1], 50))
    crashes = 0
    for _ in range(20_000):
        kind = rng.integers(0, 3)
        if kind == 0:
            data = rng.bytes(int(rng.integers(0, 120)))
        else:
            buf = bytearray(valid[:int(rng.integers(1, min(len(valid), 400)))])
            for _ in range(int(rng.integers(1, 5))):
                buf[int(rng.integers(0, len(buf)))] = int(rng.integers(0, 256))
            data = bytes(buf) if kind == 1 else bytes(buf[:int(rng.integers(0, len(buf) + 1))])
        for fn in (decode_frame, StreamDecoder().feed):
            try:
                fn(data)
            except FrameError:
                pass
            except Exception:
                crashes += 1
    ok = identical == 100 and crashes == 0
    report(capsys, 8, ok, f"{identical}/100 recordings round-trip exactly; {crashes} crashes in "
                          "40000 fuzzed decodes")
    assert ok


def test_c09_task_schedules(capsys):
    bad = []
    for cfg, lo, hi in ((auditory_config(), 500.0, 600.0), (visual_config(), 250.0, 350.0)):
        for seed in range(1000):
            s = gen_schedule(cfg, seed)
            dev = np.array([t.kind == "deviant" for t in s.trials])
            blocks = np.array([t.block for t in s.trials])
            isi = np.diff(s.onsets_ms) - cfg.stim_duration_ms
            per_block = [int(dev[blocks == b].sum()) for b in range(4)]
            markers = schedule_to_markers(s, 500.0)
            stim = [m for m in markers if m.label in ("std", "dev")]
            if (len(s.trials) != 360 or dev.sum() != 72 or per_block != [18] * 4
                    or isi.min() < lo or isi.max() > hi or len(stim) != 360):
                bad.append((cfg.modality, seed))
    ok = not bad
    report(capsys, 9, ok, f"{2000 - len(bad)}/2000 schedules exact (auditory and visual, 1000 seeds each)")
    assert ok


def test_c10_pipeline_bookkeeping(capsys):
    params = load_config().synth
    assert params.artifacts.bad_channels == ("TP8",) and params.artifacts.blink_rate > 0
    tasks = ("eyes", "auditory", "visual")
    exact = 0
    for seed in range(50):
        rep = run_pipeline(make_subject(tasks[seed % 3], params, 500 + seed)).report
        exact += rep["bad_channels"] == ["TP8"] and len(rep["ica"]["removed"]) >= 1
    ok = exact >= 45
    report(capsys, 10, ok, f"exactly 1 bad channel and >= 1 removed component in {exact}/50 subjects "
                           "(need >= 45)")
    assert ok


def test_c11_end_to_end_budget(capsys, tmp_path):
    t0 = time.monotonic()
    res = subprocess.run([sys.executable, "-m", "eegkit.cli", "study", "--out", str(tmp_path / "study")],
                         capture_output=True, text=True, timeout=1800)
    elapsed = time.monotonic() - t0
    ok = res.returncode == 0 and elapsed <= 300
    report(capsys, 11, ok, f"eegkit study exit {res.returncode} in {elapsed:.0f} s (limit 300 s)")
    assert res.returncode == 0, res.stdout + res.stderr
    assert elapsed <= 300
