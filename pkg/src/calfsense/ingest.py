"""Stream listener: reassembles wire frames from a TCP byte stream into sessions."""

from __future__ import annotations

import logging
import queue
import socket
import time
from dataclasses import dataclass
from typing import Iterator, List, Optional, Protocol, Tuple

from .core import NOMINAL_RATE_HZ, MotionLabel, SensorFrame, Session
from .errors import BindFailure, CrcMismatch, FrameError, OutOfRange
from .wire import FRAME_SIZE, MAGIC, AdcScale, WireFrame, adc_to_volts, decode_frame

log = logging.getLogger(__name__)


@dataclass
class StreamStats:
    frames_received: int = 0
    frames_dropped: int = 0  # frames missing according to seq gaps
    gaps: int = 0
    crc_failures: int = 0
    bad_frames: int = 0  # magic found but version unsupported
    out_of_order: int = 0
    out_of_range: int = 0  # frames with a count above full scale
    bytes_skipped: int = 0
    bytes_received: int = 0
    elapsed_s: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class FrameReassembler:
    """Incremental decoder that resynchronises on the magic after corruption.

    Feed arbitrary chunks of bytes; complete, CRC-valid frames come back in
    stream order. A candidate frame that fails validation costs one byte, so a
    corrupt frame can never swallow the valid frame that follows it.
    """

    def __init__(self, stats: Optional[StreamStats] = None):
        self.stats = stats if stats is not None else StreamStats()
        self._buf = bytearray()
        self._last_seq: Optional[int] = None

    def feed(self, data: bytes) -> List[WireFrame]:
        self.stats.bytes_received += len(data)
        self._buf.extend(data)
        out = []
        buf = self._buf
        pos = 0
        while True:
            start = buf.find(MAGIC, pos)
            if start < 0:
                # keep a trailing 0xA5 that might begin the next magic
                keep = 1 if buf and buf[-1] == MAGIC[0] else 0
                self.stats.bytes_skipped += len(buf) - pos - keep
                pos = len(buf) - keep
                break
            self.stats.bytes_skipped += start - pos
            pos = start
            if len(buf) - pos < FRAME_SIZE:
                break
            try:
                frame = decode_frame(buf[pos : pos + FRAME_SIZE])
            except CrcMismatch:
                self.stats.crc_failures += 1
                self.stats.bytes_skipped += 1
                pos += 1
                continue
            except FrameError:
                self.stats.bad_frames += 1
                self.stats.bytes_skipped += 1
                pos += 1
                continue
            pos += FRAME_SIZE
            if self._accept(frame):
                out.append(frame)
        del buf[:pos]
        return out

    def _accept(self, frame: WireFrame) -> bool:
        last = self._last_seq
        if last is not None:
            if frame.seq <= last:
                self.stats.out_of_order += 1
                return False
            if frame.seq != last + 1:
                self.stats.gaps += 1
                self.stats.frames_dropped += frame.seq - last - 1
        self._last_seq = frame.seq
        self.stats.frames_received += 1
        return True


def wire_to_sensor(frame: WireFrame, scale: AdcScale) -> SensorFrame:
    volts = tuple(adc_to_volts(a, scale) for a in frame.adc)
    return SensorFrame(frame.timestamp_us, volts, frame.seq)


class FrameSink(Protocol):
    def append(self, frame: SensorFrame) -> None: ...

    def close(self) -> None: ...


class SessionSink:
    """Accumulates frames in memory and builds a ``Session`` on demand."""

    def __init__(self, subject_id: str = "unknown", motion: Optional[MotionLabel] = None,
                 set_index: int = 1, sample_rate_hz: float = NOMINAL_RATE_HZ):
        self.subject_id = subject_id
        self.motion = motion
        self.set_index = set_index
        self.sample_rate_hz = sample_rate_hz
        self.frames: List[SensorFrame] = []
        self.closed = False

    def append(self, frame: SensorFrame) -> None:
        self.frames.append(frame)

    def close(self) -> None:
        self.closed = True

    def session(self) -> Session:
        return Session.from_frames(
            self.frames, self.subject_id, self.motion, self.set_index, self.sample_rate_hz
        )


_END = object()


class QueueSink:
    """Bounded hand-off to a consumer thread.

    ``append`` blocks while the queue is full; iterating yields frames in the
    order they were appended (which the reassembler guarantees is seq order)
    until ``close`` is called.
    """

    def __init__(self, maxsize: int = 1024):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)

    def append(self, frame: SensorFrame) -> None:
        self._q.put(frame)

    def close(self) -> None:
        self._q.put(_END)

    def __iter__(self) -> Iterator[SensorFrame]:
        while True:
            item = self._q.get()
            if item is _END:
                return
            yield item


def parse_endpoint(endpoint: str) -> Tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host or "0.0.0.0", int(port)


class IngestServer:
    """Listening socket that records one device connection at a time."""

    def __init__(self, endpoint: str, scale: AdcScale = AdcScale(), recv_size: int = 4096):
        host, port = parse_endpoint(endpoint)
        self.scale = scale
        self.recv_size = recv_size
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
            self._sock.listen(1)
        except OSError as exc:
            self._sock.close()
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc

    @property
    def address(self) -> Tuple[str, int]:
        return self._sock.getsockname()[:2]

    def serve_one(self, sink: FrameSink, accept_timeout: Optional[float] = None,
                  idle_timeout: Optional[float] = None) -> StreamStats:
        """Accept a single connection and record it until EOF.

        Connection errors end the session; everything received up to that
        point has already been handed to ``sink``.
        """
        self._sock.settimeout(accept_timeout)
        conn, peer = self._sock.accept()
        log.info("device connected from %s:%s", *peer[:2])
        stats = StreamStats()
        reasm = FrameReassembler(stats)
        t0 = time.perf_counter()
        try:
            conn.settimeout(idle_timeout)
            while True:
                try:
                    chunk = conn.recv(self.recv_size)
                except (ConnectionError, socket.timeout) as exc:
                    log.warning("connection ended: %s", exc)
                    break
                if not chunk:
                    break
                for wf in reasm.feed(chunk):
                    try:
                        frame = wire_to_sensor(wf, self.scale)
                    except OutOfRange:
                        stats.out_of_range += 1
                        continue
                    sink.append(frame)
        finally:
            conn.close()
            sink.close()
            stats.elapsed_s = time.perf_counter() - t0
        log.info("session closed: %s", stats.as_dict())
        return stats

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_ingest(endpoint: str, sink: FrameSink, scale: AdcScale = AdcScale(),
                 accept_timeout: Optional[float] = None) -> StreamStats:
    with IngestServer(endpoint, scale) as server:
        return server.serve_one(sink, accept_timeout=accept_timeout)
