"""Framed wire protocol, a replaying device server and a recording client.

Frame layout (little-endian)::

    magic 0x45 0x47 | kind u8 | len u16 | payload[len] | crc32 u32

The CRC (IEEE, as in zlib) covers kind, len and payload. Kinds: 1 header,
2 samples, 3 marker, 4 end.
"""
from __future__ import annotations

import logging
import os
import socket
import socketserver
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from urllib.parse import parse_qsl, urlencode

import numpy as np

from .core import EEGKitError, EventMarker, Recording

__all__ = [
    "FrameError",
    "BadMagicError",
    "ChecksumError",
    "TruncatedError",
    "UnknownKindError",
    "MalformedFrameError",
    "OversizedPayloadError",
    "StreamError",
    "IncompleteStreamError",
    "Frame",
    "StreamHeader",
    "encode_frame",
    "decode_frame",
    "read_frame",
    "StreamDecoder",
    "header_frame",
    "samples_frame",
    "marker_frame",
    "end_frame",
    "parse_header",
    "parse_samples",
    "parse_marker",
    "recording_frames",
    "StreamServer",
    "serve",
    "record",
    "parse_endpoint",
    "default_endpoint",
    "DEFAULT_ENDPOINT",
]

log = logging.getLogger(__name__)

MAGIC = b"\x45\x47"
KINDS = {"header": 1, "samples": 2, "marker": 3, "end": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}
_PREFIX = struct.Struct("<2sBH")
_CRC = struct.Struct("<I")
OVERHEAD = _PREFIX.size + _CRC.size
MAX_PAYLOAD = 0xFFFF
DEFAULT_ENDPOINT = ("127.0.0.1", 8372)


class FrameError(EEGKitError):
    """Base class for frame decoding failures."""


class BadMagicError(FrameError):
    pass


class ChecksumError(FrameError):
    pass


class TruncatedError(FrameError):
    pass


class UnknownKindError(FrameError):
    pass


class MalformedFrameError(FrameError):
    pass


class OversizedPayloadError(FrameError):
    pass


class StreamError(EEGKitError):
    """Connection-level failure (refused, timed out, protocol order)."""


class IncompleteStreamError(StreamError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Frame:
    kind: str
    payload: bytes = b""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownKindError(f"unknown frame kind {self.kind!r}")
        object.__setattr__(self, "payload", bytes(self.payload))


@dataclass(frozen=True)
class StreamHeader:
    rate: int
    channels: tuple
    session_id: str = ""


def encode_frame(f: Frame) -> bytes:
    n = len(f.payload)
    if n > MAX_PAYLOAD:
        raise OversizedPayloadError(f"payload of {n} bytes exceeds {MAX_PAYLOAD}")
    body = _PREFIX.pack(MAGIC, KINDS[f.kind], n) + f.payload
    return body + _CRC.pack(zlib.crc32(body[2:]))


def read_frame(buf, offset=0):
    """Decode the frame starting at ``offset``; returns (frame, end offset)."""
    buf = memoryview(buf)
    avail = len(buf) - offset
    if avail < 2:
        raise TruncatedError(f"need 2 magic bytes, have {max(avail, 0)}")
    if bytes(buf[offset:offset + 2]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[offset:offset + 2]).hex()} at offset {offset}")
    if avail < _PREFIX.size:
        raise TruncatedError(f"need {_PREFIX.size} header bytes, have {avail}")
    _, kind, n = _PREFIX.unpack_from(buf, offset)
    end = offset + _PREFIX.size + n + _CRC.size
    if len(buf) < end:
        raise TruncatedError(f"frame declares {n} payload bytes, buffer ends {end - len(buf)} bytes short")
    (crc,) = _CRC.unpack_from(buf, end - _CRC.size)
    if zlib.crc32(buf[offset + 2:end - _CRC.size]) != crc:
        raise ChecksumError(f"checksum mismatch in frame at offset {offset}")
    if kind not in _KIND_NAMES:
        raise UnknownKindError(f"unknown frame kind {kind}")
    payload = bytes(buf[offset + _PREFIX.size:end - _CRC.size])
    return Frame(_KIND_NAMES[kind], payload), end


def decode_frame(buf) -> Frame:
    """Decode the first frame in ``buf``; bytes past its declared length are ignored."""
    return read_frame(buf)[0]


class StreamDecoder:
    """Incremental decoder: feed bytes, collect complete frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data):
        self._buf.extend(data)
        frames, pos = [], 0
        while True:
            try:
                frame, pos2 = read_frame(self._buf, pos)
            except TruncatedError:
                break
            frames.append(frame)
            pos = pos2
        del self._buf[:pos]
        return frames

    @property
    def pending(self):
        return len(self._buf)

    def close(self):
        if self._buf:
            raise TruncatedError(f"stream ended inside a frame ({len(self._buf)} bytes pending)")


def _short_str(s, what):
    b = s.encode("utf-8")
    if len(b) > 255:
        raise MalformedFrameError(f"{what} longer than 255 bytes")
    return bytes([len(b)]) + b


def _read_str(p, pos, what):
    if pos >= len(p):
        raise MalformedFrameError(f"{what}: missing length byte")
    n = p[pos]
    if pos + 1 + n > len(p):
        raise MalformedFrameError(f"{what}: declared {n} bytes past payload end")
    try:
        return bytes(p[pos + 1:pos + 1 + n]).decode("utf-8"), pos + 1 + n
    except UnicodeDecodeError as exc:
        raise MalformedFrameError(f"{what}: invalid UTF-8") from exc


def header_frame(h: StreamHeader) -> Frame:
    if int(h.rate) != h.rate or not 0 < h.rate < 2 ** 32:
        raise MalformedFrameError(f"rate must be a positive integer below 2^32, got {h.rate}")
    if not 0 < len(h.channels) < 256:
        raise MalformedFrameError("header needs 1..255 channels")
    p = struct.pack("<IB", int(h.rate), len(h.channels))
    p += b"".join(_short_str(c, "channel label") for c in h.channels)
    p += _short_str(h.session_id, "session id")
    return Frame("header", p)


def parse_header(f: Frame) -> StreamHeader:
    p = f.payload
    if f.kind != "header" or len(p) < 5:
        raise MalformedFrameError("not a header frame")
    rate, n = struct.unpack_from("<IB", p)
    pos, channels = 5, []
    for _ in range(n):
        c, pos = _read_str(p, pos, "channel label")
        channels.append(c)
    sid, pos = _read_str(p, pos, "session id")
    if pos != len(p):
        raise MalformedFrameError(f"{len(p) - pos} trailing bytes in header payload")
    if rate == 0 or n == 0:
        raise MalformedFrameError("header with zero rate or no channels")
    return StreamHeader(rate, tuple(channels), sid)


def samples_frame(first_sample, block) -> Frame:
    """``block`` is (n_samples, n_channels); stored channel-major per time point."""
    block = np.ascontiguousarray(block, dtype="<f4")
    return Frame("samples", struct.pack("<Q", int(first_sample)) + block.tobytes())


def parse_samples(f: Frame, n_channels):
    """(first_sample, float32 array shaped (n_samples, n_channels))."""
    p = f.payload
    if f.kind != "samples" or len(p) < 8 or (len(p) - 8) % (4 * n_channels):
        raise MalformedFrameError(f"samples payload of {len(p)} bytes does not fit {n_channels} channels")
    (first,) = struct.unpack_from("<Q", p)
    block = np.frombuffer(p, dtype="<f4", offset=8).reshape(-1, n_channels)
    return first, block


def marker_frame(m: EventMarker) -> Frame:
    if m.code > 0xFFFF:
        raise MalformedFrameError(f"marker code {m.code} does not fit in u16")
    return Frame("marker", struct.pack("<QH", m.sample, m.code) + _short_str(m.label, "marker label"))


def parse_marker(f: Frame) -> EventMarker:
    p = f.payload
    if f.kind != "marker" or len(p) < 11:
        raise MalformedFrameError("not a marker frame")
    sample, code = struct.unpack_from("<QH", p)
    label, pos = _read_str(p, 10, "marker label")
    if pos != len(p):
        raise MalformedFrameError("trailing bytes in marker payload")
    return EventMarker(sample, code, label)


def end_frame() -> Frame:
    return Frame("end")


def _session_id(rec):
    return urlencode(sorted(rec.meta.items()))


def recording_frames(rec: Recording, chunk_samples=100):
    """Yield (frame, chunk index or None) in stream order.

    A marker is sent just before the chunk holding its sample.
    """
    max_chunk = (MAX_PAYLOAD - 8) // (4 * rec.n_channels)
    if not 1 <= chunk_samples <= max_chunk:
        raise EEGKitError(f"chunk_samples must lie in [1, {max_chunk}] for {rec.n_channels} channels")
    yield header_frame(StreamHeader(rec.rate, rec.channels, _session_id(rec))), None
    data = rec.data.T.astype("<f4")
    markers = list(rec.markers)
    mi = 0
    for k, start in enumerate(range(0, rec.n_samples, chunk_samples)):
        stop = min(start + chunk_samples, rec.n_samples)
        while mi < len(markers) and markers[mi].sample < stop:
            yield marker_frame(markers[mi]), None
            mi += 1
        yield samples_frame(start, data[start:stop]), k
    yield end_frame(), None


def parse_endpoint(text):
    host, sep, port = str(text).rpartition(":")
    if not sep or not host:
        raise EEGKitError(f"endpoint must be HOST:PORT, got {text!r}")
    try:
        port = int(port)
    except ValueError:
        raise EEGKitError(f"endpoint port must be an integer, got {text!r}") from None
    if not 0 <= port <= 65535:
        raise EEGKitError(f"endpoint port out of range: {port}")
    return host, port


def default_endpoint():
    env = os.environ.get("EEGKIT_ENDPOINT")
    return parse_endpoint(env) if env else DEFAULT_ENDPOINT


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        srv = self.server
        rec, factor, chunk = srv.recording, srv.realtime_factor, srv.chunk_samples
        period = chunk / (rec.rate * factor) if factor > 0 else 0.0
        t0 = time.monotonic()
        sent = 0
        try:
            for frame, k in recording_frames(rec, chunk):
                if k is not None and period:
                    # absolute schedule: chunk k is released once its samples exist
                    delay = t0 + (k + 1) * period - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                if srv.stop_after_frames is not None and sent >= srv.stop_after_frames:
                    return
                self.request.sendall(encode_frame(frame))
                sent += 1
        except OSError as exc:
            log.warning("client %s disconnected: %s", self.client_address, exc)
        finally:
            srv._client_done(sent, time.monotonic() - t0)


class StreamServer(socketserver.ThreadingTCPServer):
    """Replays one recording to every client that connects.

    Each connection gets its own cursor. ``stop_after_frames`` cuts every
    stream short (used to exercise the recorder's truncation handling).
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, rec: Recording, endpoint=None, realtime_factor=0.0, chunk_samples=100,
                 stop_after_frames=None):
        if realtime_factor < 0:
            raise EEGKitError("realtime factor must be >= 0 (0 = as fast as possible)")
        # validate the chunk size before binding
        next(iter(recording_frames(rec, chunk_samples)))
        self.recording = rec
        self.realtime_factor = float(realtime_factor)
        self.chunk_samples = int(chunk_samples)
        self.stop_after_frames = stop_after_frames
        self.clients_served = 0
        self.frames_sent = 0
        self.session_seconds = []
        self._lock = threading.Lock()
        self._done = threading.Condition(self._lock)
        endpoint = endpoint or default_endpoint()
        try:
            super().__init__(tuple(endpoint), _Handler)
        except OSError as exc:
            raise StreamError(f"cannot bind {endpoint[0]}:{endpoint[1]}: {exc}") from exc

    @property
    def endpoint(self):
        return self.server_address[:2]

    def _client_done(self, n_frames, seconds):
        with self._done:
            self.clients_served += 1
            self.session_seconds.append(seconds)
            self.frames_sent += n_frames
            self._done.notify_all()

    def wait_clients(self, n, timeout=None):
        with self._done:
            return self._done.wait_for(lambda: self.clients_served >= n, timeout)

    def start(self):
        """Serve from a background thread; returns self."""
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(rec: Recording, endpoint=None, realtime_factor=0.0, chunk_samples=100, max_clients=None,
          ready=None):
    """Serve ``rec`` until ``max_clients`` sessions have completed (forever if None).

    ``ready`` is called with the bound (host, port) once listening.
    Returns a session summary.
    """
    with StreamServer(rec, endpoint, realtime_factor, chunk_samples) as srv:
        if ready is not None:
            ready(srv.endpoint)
        t0 = time.monotonic()
        try:
            if max_clients is None:
                while True:
                    time.sleep(3600)
            srv.wait_clients(max_clients)
        except KeyboardInterrupt:
            pass
        return {"endpoint": f"{srv.endpoint[0]}:{srv.endpoint[1]}", "clients": srv.clients_served,
                "frames_sent": srv.frames_sent, "n_samples": rec.n_samples,
                "n_markers": len(rec.markers), "elapsed_s": round(time.monotonic() - t0, 3),
                "session_s": [round(x, 3) for x in srv.session_seconds]}


def _assemble(header, blocks, markers, meta):
    data = np.concatenate(blocks, axis=0).T if blocks else np.zeros((len(header.channels), 0))
    n = data.shape[1]
    keep = [m for m in markers if m.sample < n]
    return Recording(header.rate, header.channels, data.astype(np.float64), keep, meta)


def record(endpoint=None, out_dir=None, timeout=10.0) -> Recording:
    """Connect, receive one full session and rebuild the Recording.

    Samples arrive as float32, so the result equals the served recording at
    float32 precision. If the stream breaks off before the end frame, the
    partial recording (meta ``incomplete=1``) is saved when ``out_dir`` is
    given and IncompleteStreamError is raised.
    """
    from .io import save_recording

    endpoint = endpoint or default_endpoint()
    try:
        sock = socket.create_connection(tuple(endpoint), timeout=timeout)
    except ConnectionRefusedError as exc:
        raise StreamError(f"connection refused: {endpoint[0]}:{endpoint[1]}") from exc
    except OSError as exc:
        raise StreamError(f"cannot connect to {endpoint[0]}:{endpoint[1]}: {exc}") from exc

    dec = StreamDecoder()
    header, blocks, markers, expected, finished = None, [], [], 0, False
    problem = None
    with sock:
        try:
            while not finished:
                chunk = sock.recv(1 << 16)
                if not chunk:
                    break
                for f in dec.feed(chunk):
                    if header is None:
                        if f.kind != "header":
                            raise MalformedFrameError(f"stream must start with a header, got {f.kind}")
                        header = parse_header(f)
                    elif f.kind == "samples":
                        first, block = parse_samples(f, len(header.channels))
                        if first != expected:
                            raise MalformedFrameError(f"samples frame starts at {first}, expected {expected}")
                        blocks.append(block)
                        expected += len(block)
                    elif f.kind == "marker":
                        markers.append(parse_marker(f))
                    elif f.kind == "end":
                        finished = True
                        break
                    else:
                        raise MalformedFrameError("second header frame in stream")
            if not finished:
                dec.close()
                problem = "connection closed before the end frame"
        except socket.timeout:
            problem = f"no data for {timeout} s"
        except TruncatedError as exc:
            problem = str(exc)
        except OSError as exc:
            problem = f"connection lost: {exc}"

    if header is None:
        raise IncompleteStreamError(f"stream truncated before the header ({problem})")
    meta = dict(parse_qsl(header.session_id, keep_blank_values=True))
    if problem is None:
        late = [m for m in markers if m.sample >= expected]
        if late:
            raise MalformedFrameError(f"marker at sample {late[0].sample} beyond {expected} samples")
        rec = _assemble(header, blocks, markers, meta)
        if out_dir is not None:
            save_recording(rec, out_dir)
        return rec
    meta["incomplete"] = "1"
    partial = _assemble(header, blocks, markers, meta)
    if out_dir is not None:
        save_recording(partial, out_dir)
    raise IncompleteStreamError(f"incomplete stream after {partial.n_samples} samples: {problem}", partial)
