"""On-disk recording directories (meta.json, signals.csv, markers.csv)."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import EEGKitError, EventMarker, Recording

__all__ = [
    "RecordingIOError",
    "MissingFileError",
    "MalformedRowError",
    "MarkerRangeError",
    "DuplicateChannelError",
    "atomic_write_text",
    "atomic_write_bytes",
    "save_recording",
    "load_recording",
]


class RecordingIOError(EEGKitError):
    pass


class MissingFileError(RecordingIOError):
    pass


class MalformedRowError(RecordingIOError):
    pass


class MarkerRangeError(RecordingIOError):
    pass


class DuplicateChannelError(RecordingIOError):
    pass


def atomic_write_bytes(path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _format_f32(values):
    """Shortest decimal strings that round-trip float32 exactly."""
    flat = np.asarray(values, dtype=np.float32).ravel()
    out = [np.format_float_positional(v, unique=True, trim="-") for v in flat]
    return np.array(out, dtype=object).reshape(np.shape(values))


def save_recording(rec: Recording, directory):
    """Write ``rec`` as a recording directory; amplitudes stored at float32 precision."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        meta = {"rate": rec.rate, "channels": list(rec.channels), "meta": dict(sorted(rec.meta.items()))}
        atomic_write_text(directory / "meta.json", json.dumps(meta, indent=2, ensure_ascii=False) + "\n")

        lines = ["sample," + ",".join(rec.channels)]
        if rec.n_samples:
            cells = _format_f32(rec.data.T)
            lines.extend(f"{i}," + ",".join(row) for i, row in enumerate(cells))
        atomic_write_text(directory / "signals.csv", "\n".join(lines) + "\n")

        mlines = ["sample,code,label"]
        for m in rec.markers:
            if any(ch in m.label for ch in ",\n\r"):
                raise RecordingIOError(f"marker label may not contain commas or newlines: {m.label!r}")
            mlines.append(f"{m.sample},{m.code},{m.label}")
        atomic_write_text(directory / "markers.csv", "\n".join(mlines) + "\n")
    except OSError as exc:
        raise RecordingIOError(f"cannot write recording to {directory}: {exc}") from exc


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFileError(f"missing file: {path}") from None
    except OSError as exc:
        raise RecordingIOError(f"cannot read {path}: {exc}") from exc


def load_recording(directory) -> Recording:
    directory = Path(directory)
    try:
        meta = json.loads(_read(directory / "meta.json"))
        rate = float(meta["rate"])
        channels = [str(c) for c in meta["channels"]]
        extra = {str(k): str(v) for k, v in meta.get("meta", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRowError(f"{directory / 'meta.json'}: malformed metadata ({exc})") from exc
    if len(set(channels)) != len(channels):
        raise DuplicateChannelError(f"{directory / 'meta.json'}: duplicate channel labels")

    sig_path = directory / "signals.csv"
    lines = _read(sig_path).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedRowError(f"{sig_path}: empty file, header expected")
    header = lines[0].split(",")
    if header[0] != "sample" or header[1:] != channels:
        raise MalformedRowError(f"{sig_path}:1: header does not match channels in meta.json")
    if len(set(header[1:])) != len(header) - 1:
        raise DuplicateChannelError(f"{sig_path}:1: duplicate channel labels")
    width = len(header)
    for lineno, line in enumerate(lines[1:], start=2):
        if line.count(",") != width - 1:
            raise MalformedRowError(
                f"{sig_path}:{lineno}: expected {width} fields, found {line.count(',') + 1}"
            )
    n = len(lines) - 1
    if n:
        try:
            values = np.array(",".join(lines[1:]).split(","), dtype=np.float64).reshape(n, width)
        except ValueError:
            for lineno, line in enumerate(lines[1:], start=2):
                try:
                    [float(x) for x in line.split(",")]
                except ValueError:
                    raise MalformedRowError(f"{sig_path}:{lineno}: non-numeric field") from None
            raise
        if not np.array_equal(values[:, 0], np.arange(n)):
            bad = int(np.argmax(values[:, 0] != np.arange(n)))
            raise MalformedRowError(f"{sig_path}:{bad + 2}: sample index out of sequence")
        data = values[:, 1:].T.astype(np.float32).astype(np.float64)
    else:
        data = np.zeros((len(channels), 0))

    mk_path = directory / "markers.csv"
    mlines = _read(mk_path).split("\n")
    if mlines and mlines[-1] == "":
        mlines.pop()
    if not mlines or mlines[0] != "sample,code,label":
        raise MalformedRowError(f"{mk_path}:1: expected header 'sample,code,label'")
    markers = []
    for lineno, line in enumerate(mlines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedRowError(f"{mk_path}:{lineno}: expected 3 fields, found {len(parts)}")
        try:
            sample, code = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedRowError(f"{mk_path}:{lineno}: sample and code must be integers") from None
        if sample < 0 or sample >= n:
            raise MarkerRangeError(f"{mk_path}:{lineno}: marker out of range (sample {sample}, {n} samples)")
        try:
            markers.append(EventMarker(sample, code, parts[2]))
        except EEGKitError as exc:
            raise MalformedRowError(f"{mk_path}:{lineno}: {exc}") from None
    return Recording(rate, channels, data, markers, extra)
