"""Study orchestration: simulate, stream, preprocess, analyze.

The in-memory path (``simulate_subject`` -> ``subject_features`` ->
``analyze_group``) is what the disk commands compose; the ``cmd_*`` functions
only add file layout, failure isolation and manifests.
"""
from __future__ import annotations

import csv
import io as _io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import StudyConfig
from .core import EEGKitError, adjacency, standard_montage
from .io import atomic_write_bytes, atomic_write_text, load_recording, save_recording
from .preprocess.pipeline import load_epochs, load_psd, run_pipeline, save_epochs, save_psd
from .stats.cluster import ClusterTestConfig
from .stats.contrasts import alpha_contrast, alpha_detected, erp_contrast, n170_detected, p300_detected
from .stats.erp import erp_average
from .stats.spectral import PsdResult
from .synth import make_subject
from .tasks import TASKS

__all__ = [
    "GroupData",
    "subject_label",
    "subject_seed",
    "simulate_subject",
    "subject_features",
    "analysis_channels",
    "cluster_config",
    "analyze_group",
    "effect_planted",
    "run_study",
    "cmd_simulate",
    "cmd_loopback",
    "cmd_preprocess",
    "cmd_analyze",
    "cmd_study",
    "SUMMARY_SCHEMA",
]

log = logging.getLogger(__name__)

CONDITIONS = {"eyes": ("eyes_closed", "eyes_open"), "auditory": ("dev", "std"), "visual": ("dev", "std")}
EFFECTS = {"eyes": "alpha", "auditory": "p300", "visual": "n170"}


def subject_label(i):
    return f"sub-{i + 1:02d}"


def subject_seed(study_seed, subject, task):
    """Independent per (study seed, subject index, task) integer seed."""
    ss = np.random.SeedSequence([int(study_seed), int(subject), TASKS.index(task)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def simulate_subject(cfg: StudyConfig, subject, task):
    seed = subject_seed(cfg.study.seed, subject, task)
    rec = make_subject(task, cfg.synth, seed)
    return rec.replace(meta={**rec.meta, "subject": subject_label(subject)})


def analysis_channels(channels, reference):
    """Channels entering group statistics: the reference is identically zero."""
    return tuple(c for c in channels if c != reference)


def subject_features(result, channels):
    """(points, cond_a, cond_b) for one preprocessed subject.

    Eyes: closed and open PSD (channel x freq). Oddball: deviant and standard
    trial means (channel x time in ms).
    """
    a_name, b_name = CONDITIONS[result.task]
    if result.task == "eyes":
        a, b = result.psd[a_name], result.psd[b_name]
        idx = [a.channels.index(c) for c in channels]
        return a.freqs, a.power[idx], b.power[idx]
    ep = result.epochs
    dev, std = erp_average(ep, a_name), erp_average(ep, b_name)
    idx = [ep.channels.index(c) for c in channels]
    return dev.times, dev.mean[idx], std.mean[idx]


@dataclass(frozen=True, eq=False)
class GroupData:
    """Per-subject condition summaries stacked as (subject, channel, point)."""

    task: str
    subjects: tuple
    channels: tuple
    points: np.ndarray
    cond_a: np.ndarray
    cond_b: np.ndarray

    @property
    def conditions(self):
        return CONDITIONS[self.task]

    @classmethod
    def from_features(cls, task, subjects, channels, feats):
        points = feats[0][0]
        for s, f in zip(subjects, feats):
            if len(f[0]) != len(points) or not np.allclose(f[0], points):
                raise EEGKitError(f"{task}: subject {s} is on a different grid than {subjects[0]}")
        return cls(task, tuple(subjects), tuple(channels), np.asarray(points, dtype=float),
                   np.stack([f[1] for f in feats]), np.stack([f[2] for f in feats]))

    def save(self, path):
        buf = _io.BytesIO()
        meta = {"task": self.task, "subjects": list(self.subjects), "channels": list(self.channels)}
        np.savez(buf, meta=np.array(json.dumps(meta)), points=self.points, cond_a=self.cond_a,
                 cond_b=self.cond_b)
        atomic_write_bytes(path, buf.getvalue())

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return cls(meta["task"], tuple(meta["subjects"]), tuple(meta["channels"]), z["points"],
                       z["cond_a"], z["cond_b"])


def cluster_config(cfg: StudyConfig, channels):
    st = cfg.stats
    adj = adjacency(standard_montage(), channels, st.max_angle)
    return ClusterTestConfig(adj, st.point_alpha, st.cluster_alpha, st.n_permutations, "two_sided",
                             st.seed, st.exact_when_feasible)


def effect_planted(cfg: StudyConfig, task):
    s = cfg.synth
    if task == "eyes":
        return s.alpha.amplitude_closed != s.alpha.amplitude_open
    return (s.p300 if task == "auditory" else s.n170).amplitude != 0


def analyze_group(group: GroupData, cfg: StudyConfig):
    """Cluster test plus the detection rule for the task's planted effect.

    Returns (ClusterTestResult, detected).
    """
    if len(group.subjects) < 2:
        raise EEGKitError(f"{group.task}: group statistics need at least 2 subjects, got {len(group.subjects)}")
    ccfg = cluster_config(cfg, group.channels)
    st = cfg.stats
    if group.task == "eyes":
        closed = PsdResult(group.points, group.cond_a, group.channels, "eyes_closed")
        opened = PsdResult(group.points, group.cond_b, group.channels, "eyes_open")
        res = alpha_contrast(closed, opened, ccfg)
        return res, alpha_detected(res, tuple(st.alpha_band_hz), st.min_temporal_channels)
    res = erp_contrast(group.cond_a, group.cond_b, group.points, group.channels, ccfg,
                       tuple(st.latency_range_ms))
    if group.task == "auditory":
        return res, p300_detected(res, tuple(st.p300_window_ms))
    return res, n170_detected(res, tuple(st.n170_window_ms))


def _one_subject(args):
    cfg, subject, task = args
    rec = simulate_subject(cfg, subject, task)
    result = run_pipeline(rec, cfg.pipeline, task=task)
    chans = analysis_channels(rec.channels, cfg.pipeline.reference)
    return subject_features(result, chans), result.report


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def run_study(cfg: StudyConfig, tasks=None):
    """In-memory study: {task: (GroupData, ClusterTestResult, detected, reports)}."""
    tasks = tuple(tasks or cfg.study.tasks)
    subjects = list(range(cfg.study.n_subjects))
    chans = analysis_channels(cfg.synth.channels, cfg.pipeline.reference)
    out = {}
    for task in tasks:
        rows = _map(_one_subject, [(cfg, s, task) for s in subjects], cfg.study.jobs)
        group = GroupData.from_features(task, [subject_label(s) for s in subjects], chans,
                                        [r[0] for r in rows])
        res, detected = analyze_group(group, cfg)
        out[task] = (group, res, detected, [r[1] for r in rows])
    return out


# ---------------------------------------------------------------- disk layout


def _task_dir(root, subject_label_, task):
    return Path(root) / subject_label_ / f"task-{task}"


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _simulate_one(args):
    cfg, subject, task, out = args
    rec = simulate_subject(cfg, subject, task)
    d = _task_dir(out, subject_label(subject), task)
    save_recording(rec, d)
    return str(d)


def cmd_simulate(cfg: StudyConfig, out):
    """One recording directory per subject and task under ``out``."""
    items = [(cfg, s, t, str(out)) for s in range(cfg.study.n_subjects) for t in cfg.study.tasks]
    return [Path(p) for p in _map(_simulate_one, items, cfg.study.jobs)]


def find_recordings(root):
    root = Path(root)
    if (root / "meta.json").exists():
        return [root]
    return sorted(p.parent for p in root.rglob("meta.json"))


def cmd_loopback(cfg: StudyConfig, src, out):
    """Stream every recording under ``src`` through a local server and record it under ``out``."""
    from .stream import StreamServer, record

    src, out = Path(src), Path(out)
    dirs = []
    for d in find_recordings(src):
        rec = load_recording(d)
        target = out / d.relative_to(src)
        with StreamServer(rec, ("127.0.0.1", 0), 0.0, cfg.study.chunk_samples) as srv:
            got = record(srv.endpoint, target)
        if not got.equals(rec):
            raise EEGKitError(f"loopback of {d} did not reproduce the recording")
        dirs.append(target)
    return dirs


def _preprocess_one(args):
    cfg, d, rel, out = args
    target = Path(out) / rel
    try:
        rec = load_recording(d)
        task = rec.meta.get("task")
        if task not in TASKS:
            raise EEGKitError(f"recording meta has no valid task (got {task!r})")
        result = run_pipeline(rec, cfg.pipeline, task=task)
        target.mkdir(parents=True, exist_ok=True)
        if task == "eyes":
            save_psd(result.psd, target / "psd.npz")
        else:
            save_epochs(result.epochs, target / "epochs.npz")
        report = {**result.report, "subject": rec.meta.get("subject", rel.split("/")[0]),
                  "source": str(d)}
        _write_json(target / "report.json", report)
        return rel, None
    except (EEGKitError, OSError, ValueError) as exc:
        return rel, f"{type(exc).__name__}: {exc}"


def cmd_preprocess(cfg: StudyConfig, src, out):
    """Run the pipeline on every recording under ``src``; failures are isolated.

    Returns {"completed": [...], "failed": {relative dir: message}}.
    """
    src, out = Path(src), Path(out)
    dirs = find_recordings(src)
    if not dirs:
        raise EEGKitError(f"no recording directories under {src}")
    items = [(cfg, str(d), d.relative_to(src).as_posix() if d != src else d.name, str(out))
             for d in dirs]
    done, failed = [], {}
    for rel, err in _map(_preprocess_one, items, cfg.study.jobs):
        if err is None:
            done.append(rel)
        else:
            log.error("preprocess %s failed: %s", rel, err)
            failed[rel] = err
    summary = {"completed": done, "failed": failed}
    _write_json(out / "preprocess.json", summary)
    return summary


def _load_features(d, task, channels):
    report = json.loads((d / "report.json").read_text(encoding="utf-8"))
    a_name, b_name = CONDITIONS[task]
    if task == "eyes":
        psd = load_psd(d / "psd.npz")
        idx = [psd[a_name].channels.index(c) for c in channels]
        return report, (psd[a_name].freqs, psd[a_name].power[idx], psd[b_name].power[idx])
    ep = load_epochs(d / "epochs.npz")
    dev, std = erp_average(ep, a_name), erp_average(ep, b_name)
    idx = [ep.channels.index(c) for c in channels]
    return report, (dev.times, dev.mean[idx], std.mean[idx])


def _cluster_rows(task, res):
    rows = []
    for k, c in enumerate(res.clusters):
        pts = np.nonzero(c.mask.any(axis=0))[0]
        chans = [res.channels[i] for i in np.nonzero(c.mask.any(axis=1))[0]]
        rows.append({"task": task, "cluster": k, "sign": "positive" if c.sign > 0 else "negative",
                     "mass": round(c.mass, 6), "p_value": round(c.p_value, 6),
                     "significant": c.significant, "start": float(res.points[pts[0]]),
                     "stop": float(res.points[pts[-1]]), "channels": " ".join(chans)})
    return rows


def cmd_analyze(cfg: StudyConfig, src, out):
    """Group statistics per task from preprocessed subjects under ``src``.

    Writes summary.json, clusters.csv and one group-<task>.npz per task.
    """
    src, out = Path(src), Path(out)
    chans = analysis_channels(cfg.synth.channels, cfg.pipeline.reference)
    reports = sorted(src.rglob("report.json"))
    by_task = {}
    for r in reports:
        task = r.parent.name.removeprefix("task-")
        if task in TASKS:
            by_task.setdefault(task, []).append(r.parent)
    if not by_task:
        raise EEGKitError(f"no preprocessed subjects under {src}")
    summary = {"n_subjects": {}, "tasks": {}, "pipeline": {}, "manifest": []}
    csv_rows = []
    for task in [t for t in TASKS if t in by_task]:
        subjects, feats = [], []
        for d in by_task[task]:
            report, f = _load_features(d, task, chans)
            subjects.append(report.get("subject", d.parent.name))
            feats.append(f)
            summary["pipeline"].setdefault(subjects[-1], {})[task] = {
                "bad_channels": report["bad_channels"],
                "ica_removed": report["ica"]["removed"],
                "intervals_rejected": report["intervals"]["n_intervals"],
                "trials_rejected": report.get("trials_rejected", 0),
            }
        group = GroupData.from_features(task, subjects, chans, feats)
        res, detected = analyze_group(group, cfg)
        gpath = out / f"group-{task}.npz"
        group.save(gpath)
        sig = res.significant
        summary["tasks"][task] = {
            "effect": EFFECTS[task],
            "contrast": res.meta["contrast"],
            "axis": res.meta["axis"],
            "planted": effect_planted(cfg, task),
            "detected": bool(detected),
            "min_p": min((c.p_value for c in res.clusters), default=1.0),
            "n_significant": len(sig),
            "exact": res.exact,
            "n_permutations": res.n_permutations,
            "threshold": res.threshold,
            "clusters": res.to_dict()["clusters"],
            "group_file": gpath.name,
        }
        summary["n_subjects"][task] = len(subjects)
        summary["manifest"].append(gpath.name)
        csv_rows.extend(_cluster_rows(task, res))
    buf = _io.StringIO()
    fields = ["task", "cluster", "sign", "mass", "p_value", "significant", "start", "stop", "channels"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(csv_rows)
    atomic_write_text(out / "clusters.csv", buf.getvalue())
    summary["manifest"] += ["clusters.csv", "summary.json"]
    summary["all_planted_detected"] = all(
        t["detected"] == t["planted"] for t in summary["tasks"].values())
    _write_json(out / "summary.json", summary)
    return summary


def cmd_study(cfg: StudyConfig, out):
    """simulate -> loopback stream -> preprocess -> analyze -> report.

    Raises EEGKitError prefixed with the failing stage's name.
    """
    from .report import cmd_report

    out = Path(out)
    stages = [("simulate", lambda: cmd_simulate(cfg, out / "raw"))]
    rec_root = out / "raw"
    if cfg.study.loopback:
        stages.append(("stream", lambda: cmd_loopback(cfg, out / "raw", out / "recorded")))
        rec_root = out / "recorded"
    stages += [
        ("preprocess", lambda: cmd_preprocess(cfg, rec_root, out / "preprocessed")),
        ("analyze", lambda: cmd_analyze(cfg, out / "preprocessed", out / "analysis")),
        ("report", lambda: cmd_report(out / "analysis", out / "report")),
    ]
    results = {}
    for name, fn in stages:
        try:
            results[name] = fn()
        except EEGKitError as exc:
            raise EEGKitError(f"stage {name} failed: {exc}") from exc
        if name == "preprocess" and results[name]["failed"]:
            bad = ", ".join(sorted(results[name]["failed"]))
            raise EEGKitError(f"stage preprocess failed for: {bad}")
    return results["analyze"]


SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["n_subjects", "tasks", "pipeline", "manifest", "all_planted_detected"],
    "properties": {
        "n_subjects": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 2}},
        "all_planted_detected": {"type": "boolean"},
        "manifest": {"type": "array", "items": {"type": "string"}},
        "pipeline": {"type": "object"},
        "tasks": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["effect", "contrast", "planted", "detected", "min_p", "clusters"],
                "properties": {
                    "effect": {"enum": ["alpha", "p300", "n170"]},
                    "planted": {"type": "boolean"},
                    "detected": {"type": "boolean"},
                    "min_p": {"type": "number", "minimum": 0, "maximum": 1},
                    "clusters": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["sign", "mass", "p_value", "significant", "channels", "extent"],
                            "properties": {
                                "sign": {"enum": [-1, 1]},
                                "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                                "significant": {"type": "boolean"},
                                "channels": {"type": "array", "items": {"type": "string"}},
                                "extent": {"type": "array", "items": {"type": "number"},
                                           "minItems": 2, "maxItems": 2},
                            },
                        },
                    },
                },
            },
        },
    },
}
