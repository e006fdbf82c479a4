"""Domain types, motion vocabulary, baseline estimation and normalization."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateBaseline, InsufficientData

N_CHANNELS = 16
CHANNEL_NAMES = tuple(f"ch{c + 1:02d}" for c in range(N_CHANNELS))
NOMINAL_RATE_HZ = 60.0
EPSILON_V0 = 1e-6
DEFAULT_BASELINE_S = 2.0


class MotionLabel(str, Enum):
    """The ten recognised lower-limb motions plus rest.

    The enum value is the short code used on disk ("A1" ... "A10", "REST").
    """

    LIFT_HEEL = "A1"
    LIFT_TOES = "A2"
    FOOT_INVERSION = "A3"
    STRETCH_LEG_FORWARD = "A4"
    STRETCH_LEG_BACKWARD = "A5"
    STANDING_FOOT_INVERSION = "A6"
    TURN_ROUND = "A7"
    STEP_IN_SITU = "A8"
    WALK_FORWARD = "A9"
    WALK_BACKWARD = "A10"
    REST = "REST"

    @property
    def description(self) -> str:
        return _DESCRIPTIONS[self]

    @property
    def index(self) -> int:
        """Position in the canonical class order (A1 = 0, ..., REST = 10)."""
        return _ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "MotionLabel":
        """Accept a code ("A7"), an enum name ("TURN_ROUND") or a description ("turn round")."""
        key = text.strip()
        for label in cls:
            if key.upper() == label.value or key.upper() == label.name:
                return label
            if key.lower() == label.description:
                return label
        raise ValueError(f"unknown motion label {text!r}")

    @classmethod
    def motions(cls) -> tuple["MotionLabel", ...]:
        """A1..A10 in canonical order, without REST."""
        return _ORDER[:-1]

    def __str__(self) -> str:
        return self.value


_DESCRIPTIONS = {
    MotionLabel.LIFT_HEEL: "lift heel",
    MotionLabel.LIFT_TOES: "lift toes",
    MotionLabel.FOOT_INVERSION: "foot inversion",
    MotionLabel.STRETCH_LEG_FORWARD: "stretch leg forward",
    MotionLabel.STRETCH_LEG_BACKWARD: "stretch leg backward",
    MotionLabel.STANDING_FOOT_INVERSION: "standing with foot inversion",
    MotionLabel.TURN_ROUND: "turn round",
    MotionLabel.STEP_IN_SITU: "step in situ",
    MotionLabel.WALK_FORWARD: "walk forward",
    MotionLabel.WALK_BACKWARD: "walk backward",
    MotionLabel.REST: "rest",
}
_ORDER = tuple(MotionLabel)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SensorFrame:
    """One timestamped 16-channel voltage sample."""

    timestamp_us: int
    volts: tuple
    seq: int

    def __post_init__(self):
        volts = tuple(float(v) for v in self.volts)
        if len(volts) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channel values, got {len(volts)}")
        if not all(np.isfinite(volts)):
            raise ValueError("channel voltages must be finite")
        object.__setattr__(self, "volts", volts)


@dataclass(frozen=True, eq=False)
class Session:
    """An ordered recording of frames for one subject, motion and set.

    Frames are stored column-wise (timestamps, an ``(n, 16)`` voltage matrix
    and sequence numbers); ``frames`` materialises ``SensorFrame`` objects on
    demand.
    """

    subject_id: str
    motion: Optional[MotionLabel]
    set_index: int
    timestamps_us: np.ndarray
    volts: np.ndarray
    seq: np.ndarray = None
    sample_rate_hz: float = NOMINAL_RATE_HZ

    def __post_init__(self):
        ts = np.asarray(self.timestamps_us, dtype=np.int64).copy()
        volts = np.asarray(self.volts, dtype=float).copy()
        if volts.ndim != 2 or volts.shape[1] != N_CHANNELS:
            raise ValueError(f"volts must have shape (n, {N_CHANNELS}), got {volts.shape}")
        if ts.shape != (volts.shape[0],):
            raise ValueError("timestamps and volts disagree in length")
        if not np.all(np.isfinite(volts)):
            raise ValueError("channel voltages must be finite")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if self.seq is None:
            seq = np.arange(ts.size, dtype=np.int64)
        else:
            seq = np.asarray(self.seq, dtype=np.int64).copy()
            if seq.shape != ts.shape:
                raise ValueError("seq and timestamps disagree in length")
        if not 1 <= int(self.set_index) <= 4:
            raise ValueError(f"set_index must be in 1..4, got {self.set_index}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        motion = self.motion
        if motion is not None and not isinstance(motion, MotionLabel):
            motion = MotionLabel.parse(str(motion))
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "set_index", int(self.set_index))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "timestamps_us", _frozen(ts))
        object.__setattr__(self, "volts", _frozen(volts))
        object.__setattr__(self, "seq", _frozen(seq))

    @classmethod
    def from_frames(
        cls,
        frames: Iterable[SensorFrame],
        subject_id: str = "unknown",
        motion: Optional[MotionLabel] = None,
        set_index: int = 1,
        sample_rate_hz: float = NOMINAL_RATE_HZ,
    ) -> "Session":
        frames = list(frames)
        ts = np.array([f.timestamp_us for f in frames], dtype=np.int64)
        volts = np.array([f.volts for f in frames], dtype=float).reshape(len(frames), N_CHANNELS)
        seq = np.array([f.seq for f in frames], dtype=np.int64)
        return cls(subject_id, motion, set_index, ts, volts, seq, sample_rate_hz)

    @property
    def frames(self) -> list[SensorFrame]:
        return [
            SensorFrame(int(t), tuple(v), int(s))
            for t, v, s in zip(self.timestamps_us, self.volts.tolist(), self.seq)
        ]

    @property
    def t_s(self) -> np.ndarray:
        return self.timestamps_us.astype(float) / 1e6

    @property
    def duration_s(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(self.timestamps_us[-1] - self.timestamps_us[0]) / 1e6

    def __len__(self) -> int:
        return int(self.timestamps_us.size)


@dataclass(frozen=True, eq=False)
class BaselineEstimate:
    v0: np.ndarray
    window_s: float

    def __post_init__(self):
        v0 = np.asarray(self.v0, dtype=float).copy()
        if v0.shape != (N_CHANNELS,):
            raise ValueError(f"v0 must have {N_CHANNELS} entries")
        _check_v0(v0)
        object.__setattr__(self, "v0", _frozen(v0))


@dataclass(frozen=True, eq=False)
class NormalizedSeries:
    """Relative rate of change ``(V - V0) / V0`` per channel, rows = time."""

    x: np.ndarray
    sample_rate_hz: float
    t_s: np.ndarray = None
    subject_id: str = "unknown"
    motion: Optional[MotionLabel] = None
    set_index: int = 1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[1] != N_CHANNELS:
            raise ValueError(f"x must have shape (n, {N_CHANNELS}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("normalized values must be finite")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.t_s is None:
            t = np.arange(x.shape[0]) / float(self.sample_rate_hz)
        else:
            t = np.asarray(self.t_s, dtype=float)
            if t.shape != (x.shape[0],):
                raise ValueError("t_s and x disagree in length")
        if x.flags.writeable:
            x = _frozen(x.copy())
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t_s", _frozen(t.copy()) if t.flags.writeable else t)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def time_mask(self, start_s: float, end_s: float) -> np.ndarray:
        """Boolean mask of samples with ``start_s <= t < end_s`` (relative to the first sample)."""
        rel = self.t_s - self.t_s[0]
        return (rel >= start_s - 1e-9) & (rel < end_s - 1e-9)

    def drop_leading(self, n: int) -> "NormalizedSeries":
        return NormalizedSeries(
            self.x[n:], self.sample_rate_hz, self.t_s[n:], self.subject_id, self.motion, self.set_index
        )


def _check_v0(v0: np.ndarray) -> None:
    if not np.all(np.isfinite(v0)):
        raise DegenerateBaseline("baseline contains non-finite values")
    bad = np.flatnonzero(np.abs(v0) <= EPSILON_V0)
    if bad.size:
        names = ", ".join(CHANNEL_NAMES[c] for c in bad)
        raise DegenerateBaseline(f"baseline magnitude <= {EPSILON_V0} V on {names}")


FrameSource = Union[Session, Sequence[SensorFrame]]


def estimate_baseline(frames: FrameSource, window_s: float = DEFAULT_BASELINE_S) -> BaselineEstimate:
    """Per-channel mean voltage over the closed interval ``[t0, t0 + window_s]``.

    Raises:
        InsufficientData: the recording does not reach ``t0 + window_s``.
        DegenerateBaseline: a channel's mean is within ``EPSILON_V0`` of zero.
    """
    if not window_s > 0:
        raise ValueError("window_s must be positive")
    if isinstance(frames, Session):
        ts, volts = frames.timestamps_us, frames.volts
    else:
        frames = list(frames)
        ts = np.array([f.timestamp_us for f in frames], dtype=np.int64)
        volts = np.array([f.volts for f in frames], dtype=float).reshape(len(frames), N_CHANNELS)
    if ts.size == 0:
        raise InsufficientData("no frames")
    window_us = int(round(window_s * 1e6))
    rel = ts - ts[0]
    if rel[-1] < window_us:
        raise InsufficientData(
            f"recording spans {rel[-1] / 1e6:.6f} s, baseline needs {window_s} s"
        )
    win = volts[rel <= window_us]
    # a flat channel keeps its exact value (a float mean can be off by an ulp)
    lo, hi = win.min(axis=0), win.max(axis=0)
    v0 = np.where(lo == hi, lo, win.mean(axis=0))
    _check_v0(v0)
    return BaselineEstimate(v0, float(window_s))


def normalize(session: Session, baseline: BaselineEstimate) -> NormalizedSeries:
    """Relative rate of change of every frame against the baseline."""
    v0 = np.asarray(baseline.v0, dtype=float)
    _check_v0(v0)
    x = (session.volts - v0) / v0
    return NormalizedSeries(
        x,
        session.sample_rate_hz,
        session.t_s,
        session.subject_id,
        session.motion,
        session.set_index,
    )
