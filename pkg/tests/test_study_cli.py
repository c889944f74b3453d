import json
import os
import socket
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from eegkit import cli
from eegkit.config import load_config, parse_config
from eegkit.core import EEGKitError
from eegkit.io import load_recording, save_recording
from eegkit.study import SUMMARY_SCHEMA, cmd_analyze, cmd_preprocess, cmd_simulate
from eegkit.synth import make_subject

from conftest import short_params

SMALL = """
[study]
n_subjects = 6
[synth]
eyes_open_s = 20.0
eyes_closed_s = 20.0
[synth.auditory]
n_trials = 80
[synth.visual]
n_trials = 80
"""

NULL = SMALL + """
[synth.alpha]
amplitude_closed = 4.0
[synth.p300]
amplitude = 0.0
[synth.n170]
amplitude = 0.0
"""


def _write(tmp, name, text):
    p = tmp / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture(scope="module")
def small_study(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("study")
    cfg = _write(tmp, "small.toml", SMALL)
    code = cli.main(["study", "--config", str(cfg), "--out", str(tmp / "out")])
    return tmp, cfg, code


def test_study_exit_and_layout(small_study):
    tmp, _, code = small_study
    assert code == 0
    out = tmp / "out"
    for sub in ("raw", "recorded", "preprocessed", "analysis", "report"):
        assert (out / sub).is_dir()
    assert len(list((out / "recorded").glob("sub-*"))) == 6
    assert {p.name for p in (out / "report").iterdir()} == {
        "eyes.svg", "auditory.svg", "visual.svg", "report.md"}


def test_summary_schema(small_study):
    tmp, _, _ = small_study
    summary = json.loads((tmp / "out" / "analysis" / "summary.json").read_text())
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    assert summary["all_planted_detected"]
    for t in summary["tasks"].values():
        assert t["planted"] and t["detected"]
        assert t["exact"]
        assert t["min_p"] == pytest.approx(2 / 64)
    for name in summary["manifest"]:
        assert (tmp / "out" / "analysis" / name).exists()


def test_recorded_matches_raw(small_study):
    tmp, _, _ = small_study
    out = tmp / "out"
    for d in sorted((out / "raw").glob("sub-*/task-*")):
        a = load_recording(d)
        b = load_recording(out / "recorded" / d.relative_to(out / "raw"))
        np.testing.assert_array_equal(a.data, b.data)
        assert a.markers == b.markers


def test_report_svgs(small_study, tmp_path):
    tmp, _, _ = small_study
    out = tmp / "out"
    eyes = (out / "report" / "eyes.svg").read_text()
    assert 'id="sigbar_' in eyes
    assert eyes.lstrip().startswith("<?xml")
    md = (out / "report" / "report.md").read_text()
    assert "| eyes | alpha |" in md and "![visual](visual.svg)" in md
    # identical bytes when regenerated
    assert cli.main(["report", str(out / "analysis"), "--out", str(tmp_path)]) == 0
    for name in ("eyes.svg", "auditory.svg", "visual.svg", "report.md"):
        assert (tmp_path / name).read_bytes() == (out / "report" / name).read_bytes()


def test_sigbar_covers_alpha_band(small_study):
    tmp, _, _ = small_study
    summary = json.loads((tmp / "out" / "analysis" / "summary.json").read_text())
    sig = [c for c in summary["tasks"]["eyes"]["clusters"] if c["significant"]]
    assert any(c["extent"][0] <= 10.0 <= c["extent"][1] for c in sig)
    eyes = (tmp / "out" / "report" / "eyes.svg").read_text()
    temporal = [ch for ch in ("T7", "T8", "TP7", "TP8") if f'id="sigbar_{ch}_' in eyes]
    assert len(temporal) >= 2


def test_stepwise_matches_study(small_study, tmp_path):
    tmp, cfg, _ = small_study
    c = str(cfg)
    assert cli.main(["simulate", "--config", c, "--out", str(tmp_path / "raw")]) == 0
    assert cli.main(["preprocess", str(tmp_path / "raw"), "--config", c,
                     "--out", str(tmp_path / "pre")]) == 0
    assert cli.main(["analyze", str(tmp_path / "pre"), "--config", c,
                     "--out", str(tmp_path / "an")]) == 0
    assert cli.main(["report", str(tmp_path / "an"), "--out", str(tmp_path / "rep")]) == 0
    ref = tmp / "out"
    assert (json.loads((tmp_path / "an" / "summary.json").read_text())
            == json.loads((ref / "analysis" / "summary.json").read_text()))
    assert (tmp_path / "an" / "clusters.csv").read_bytes() == (ref / "analysis" / "clusters.csv").read_bytes()
    assert (tmp_path / "rep" / "eyes.svg").read_bytes() == (ref / "report" / "eyes.svg").read_bytes()


def test_null_study(tmp_path, capsys):
    cfg = _write(tmp_path, "null.toml", NULL)
    code = cli.main(["study", "--config", str(cfg), "--out", str(tmp_path / "out")])
    summary = json.loads((tmp_path / "out" / "analysis" / "summary.json").read_text())
    for t in summary["tasks"].values():
        assert not t["planted"]
    all_null = not any(t["detected"] for t in summary["tasks"].values())
    assert code == (0 if all_null else 3)
    if all_null:
        for task in ("eyes", "auditory", "visual"):
            assert "sigbar_" not in (tmp_path / "out" / "report" / f"{task}.svg").read_text()
    assert "not detected" in capsys.readouterr().out


def test_missed_effect_exits_3(tmp_path):
    # planted effect far below what 2 subjects can resolve
    text = SMALL.replace("n_subjects = 6", "n_subjects = 2").replace(
        "[study]", "[study]\ntasks = [\"auditory\"]")
    cfg = _write(tmp_path, "weak.toml", text + "[synth.p300]\namplitude = 0.5\n")
    assert cli.main(["study", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 3


def test_corrupt_subject_isolated(tmp_path):
    cfg = parse_config(SMALL.replace("n_subjects = 6", "n_subjects = 3")
                       .replace("[study]", "[study]\ntasks = [\"auditory\"]"))
    dirs = cmd_simulate(cfg, tmp_path / "raw")
    assert len(dirs) == 3
    victim = tmp_path / "raw" / "sub-02" / "task-auditory"
    (victim / "signals.csv").write_text("sample,TP7\n0,abc\n")
    res = cmd_preprocess(cfg, tmp_path / "raw", tmp_path / "pre")
    assert res["failed"].keys() == {"sub-02/task-auditory"}
    assert sorted(res["completed"]) == ["sub-01/task-auditory", "sub-03/task-auditory"]
    summary = cmd_analyze(cfg, tmp_path / "pre", tmp_path / "an")
    assert summary["n_subjects"] == {"auditory": 2}


def test_corrupt_subject_cli_exit(tmp_path, capsys):
    rec = make_subject("eyes", short_params(), seed=1)
    save_recording(rec, tmp_path / "raw" / "sub-01" / "task-eyes")
    bad = tmp_path / "raw" / "sub-02" / "task-eyes"
    save_recording(rec, bad)
    for p in bad.iterdir():
        if p.suffix == ".json":
            p.write_text("{")
    code = cli.main(["preprocess", str(tmp_path / "raw"), "--out", str(tmp_path / "pre")])
    assert code == 2
    assert "FAILED sub-02/task-eyes" in capsys.readouterr().err
    assert (tmp_path / "pre" / "sub-01" / "task-eyes" / "report.json").exists()


def test_single_subject_analyze_refused(tmp_path, capsys):
    cfg = _write(tmp_path, "one.toml", SMALL.replace("n_subjects = 6", "n_subjects = 1")
                 .replace("[study]", "[study]\ntasks = [\"eyes\"]"))
    c = str(cfg)
    assert cli.main(["simulate", "--config", c, "--out", str(tmp_path / "raw")]) == 0
    assert cli.main(["preprocess", str(tmp_path / "raw"), "--config", c,
                     "--out", str(tmp_path / "pre")]) == 0
    capsys.readouterr()
    code = cli.main(["analyze", str(tmp_path / "pre"), "--config", c, "--out", str(tmp_path / "an")])
    assert code == 2
    assert "at least 2 subjects" in capsys.readouterr().err
    with pytest.raises(EEGKitError, match="stage analyze failed"):
        from eegkit.study import cmd_study
        cmd_study(load_config(cfg), tmp_path / "st")


def test_config_default_roundtrip(tmp_path, capsys):
    assert cli.main(["config", "--default"]) == 0
    text = capsys.readouterr().out
    assert "[study]" in text and "[pipeline.filter]" in text
    p = _write(tmp_path, "c.toml", text)
    assert load_config(p) == load_config(None)
    assert cli.main(["config", "--config", str(p)]) == 0
    assert capsys.readouterr().out == text


@pytest.mark.parametrize("text, needle", [
    ("[study]\nn_subjects = \"ten\"\n", "study.n_subjects: expected integer"),
    ("[study]\nbogus = 1\n", "unknown field study.bogus"),
    ("[synth\n", "line 1"),
    ("[stats]\ncluster_alpha = 2.0\n", "cluster_alpha"),
])
def test_bad_config_exit_1(tmp_path, capsys, text, needle):
    p = _write(tmp_path, "bad.toml", text)
    assert cli.main(["study", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "config error" in err and needle in err
    assert not (tmp_path / "o").exists()


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["study"])
    assert exc.value.code == 1


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 1
    assert "cannot read config" in capsys.readouterr().err


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_record_refused(tmp_path, capsys):
    port = _free_port()
    code = cli.main(["record", "--endpoint", f"127.0.0.1:{port}", "--out", str(tmp_path / "r"),
                     "--timeout", "2"])
    assert code == 2
    assert "connection refused" in capsys.readouterr().err.lower()


def test_report_missing_summary(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path), "--out", str(tmp_path / "r")]) == 2
    assert "missing analysis summary" in capsys.readouterr().err


def _env():
    env = dict(os.environ)
    src = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    return env


def test_serve_record_subprocess_paced(tmp_path):
    rec = make_subject("eyes", short_params(eyes_open_s=2.5, eyes_closed_s=2.5), seed=3)
    save_recording(rec, tmp_path / "src")
    duration = rec.n_samples / rec.rate
    srv = subprocess.Popen([sys.executable, "-m", "eegkit.cli", "serve", str(tmp_path / "src"),
                            "--endpoint", "127.0.0.1:0", "--factor", "1"],
                           stdout=subprocess.PIPE, text=True, env=_env())
    try:
        line = srv.stdout.readline()
        assert line.startswith("serving on ")
        endpoint = line.split()[-1]
        res = subprocess.run([sys.executable, "-m", "eegkit.cli", "record", "--endpoint", endpoint,
                              "--out", str(tmp_path / "dst")], capture_output=True, text=True,
                             env=_env(), timeout=60)
        assert res.returncode == 0, res.stderr
        summary = json.loads(srv.stdout.read().strip().splitlines()[-1])
        assert srv.wait(timeout=10) == 0
    finally:
        srv.kill()
    assert summary["clients"] == 1 and summary["n_samples"] == rec.n_samples
    out = load_recording(tmp_path / "dst")
    ref = load_recording(tmp_path / "src")
    np.testing.assert_array_equal(out.data, ref.data)
    assert out.markers == ref.markers
    assert summary["session_s"][0] == pytest.approx(duration, rel=0.02)
