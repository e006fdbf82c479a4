"""Synthetic 16-channel recordings with known ground truth.

Motion sessions: each motion presses a fixed spatial pattern of the 4x4
array (``spatial_gain``, channel ch05 strongest) with a train of flat-topped
raised-cosine bursts at ``rep_hz``. Pressure goes through a piecewise-linear
response with a knee, then ``V = V0 (1 + relative + noise) + drift * t``.
Health scenarios (gait, chair stand, tandem stance) reuse the same sensor
model with scenario-specific pressure waveforms.

Everything is a pure function of ``(seed, config)``.
"""

from __future__ import annotations

import math
import os
import socket
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .core import DEFAULT_BASELINE_S, N_CHANNELS, MotionLabel, Session
from .csvio import session_filename, write_csv, write_rows
from .errors import BackpressureTimeout, InvalidScenarioParams, NegativePressure, UnknownMotion
from .ingest import parse_endpoint
from .wire import AdcScale, WireFrame, encode_frame


@dataclass(frozen=True)
class PressureModel:
    knee_kpa: float = 10.0
    s_low: float = 0.02  # relative change per kPa below the knee
    s_high: float = 0.005  # relative change per kPa above the knee
    saturation: float = 0.5

    def __post_init__(self):
        if not (self.knee_kpa > 0 and self.s_low > 0 and self.s_high >= 0 and self.saturation > 0):
            raise ValueError("pressure model parameters must be positive")
        if not self.s_high < self.s_low:
            raise ValueError("slope above the knee must be below the slope under it")


def pressure_to_relative(p_kpa, model: PressureModel = PressureModel()):
    """Relative voltage change for an applied pressure (scalar or array)."""
    p = np.asarray(p_kpa, dtype=float)
    if np.any(p < 0):
        raise NegativePressure("pressure must be non-negative")
    low = model.s_low * np.minimum(p, model.knee_kpa)
    high = model.s_high * np.maximum(p - model.knee_kpa, 0.0)
    out = np.minimum(low + high, model.saturation)
    return float(out) if out.ndim == 0 else out


# Spatial pressure patterns over the 4x4 array (row-major ch01..ch16). Each
# motion loads a different calf region; ch05 is the strongest element in all
# of them. Pairwise distance between the unit-normalized rows is >= 0.23.
DEFAULT_GAINS = {
    MotionLabel.LIFT_HEEL: (0.87, 0.65, 0.30, 0.20, 1.00, 0.52, 0.29, 0.21, 0.30, 0.25, 0.23, 0.12, 0.17, 0.20, 0.20, 0.14),
    MotionLabel.LIFT_TOES: (0.17, 0.20, 0.13, 0.19, 1.00, 0.15, 0.26, 0.30, 0.20, 0.24, 0.48, 0.60, 0.15, 0.32, 0.61, 0.84),
    MotionLabel.FOOT_INVERSION: (0.19, 0.29, 0.62, 0.87, 1.00, 0.30, 0.50, 0.63, 0.14, 0.16, 0.26, 0.35, 0.19, 0.15, 0.18, 0.16),
    MotionLabel.STRETCH_LEG_FORWARD: (0.15, 0.20, 0.20, 0.11, 1.00, 0.32, 0.23, 0.18, 0.66, 0.50, 0.27, 0.16, 0.81, 0.66, 0.36, 0.17),
    MotionLabel.STRETCH_LEG_BACKWARD: (0.27, 0.41, 0.47, 0.25, 1.00, 0.77, 0.72, 0.40, 0.47, 0.71, 0.72, 0.48, 0.31, 0.41, 0.46, 0.27),
    MotionLabel.STANDING_FOOT_INVERSION: (0.52, 0.75, 0.76, 0.52, 1.00, 0.60, 0.59, 0.41, 0.26, 0.32, 0.36, 0.27, 0.20, 0.15, 0.20, 0.18),
    MotionLabel.TURN_ROUND: (0.12, 0.16, 0.18, 0.14, 1.00, 0.28, 0.27, 0.24, 0.39, 0.58, 0.65, 0.36, 0.43, 0.76, 0.82, 0.47),
    MotionLabel.STEP_IN_SITU: (0.51, 0.41, 0.20, 0.19, 1.00, 0.61, 0.31, 0.18, 0.75, 0.59, 0.31, 0.21, 0.50, 0.41, 0.26, 0.12),
    MotionLabel.WALK_FORWARD: (0.19, 0.28, 0.37, 0.49, 1.00, 0.32, 0.65, 0.81, 0.16, 0.32, 0.60, 0.76, 0.21, 0.19, 0.35, 0.43),
    MotionLabel.WALK_BACKWARD: (0.24, 0.30, 0.33, 0.32, 1.00, 0.53, 0.67, 0.54, 0.30, 0.68, 0.86, 0.61, 0.31, 0.50, 0.67, 0.50),
}

# (peak pressure kPa, active fraction of each repetition); small motions such
# as foot inversion press less than walking
_DEFAULT_SHAPES = {
    MotionLabel.LIFT_HEEL: (12.0, 0.50),
    MotionLabel.LIFT_TOES: (7.0, 0.45),
    MotionLabel.FOOT_INVERSION: (4.0, 0.40),
    MotionLabel.STRETCH_LEG_FORWARD: (9.0, 0.50),
    MotionLabel.STRETCH_LEG_BACKWARD: (10.0, 0.50),
    MotionLabel.STANDING_FOOT_INVERSION: (5.0, 0.45),
    MotionLabel.TURN_ROUND: (11.0, 0.60),
    MotionLabel.STEP_IN_SITU: (14.0, 0.50),
    MotionLabel.WALK_FORWARD: (18.0, 0.60),
    MotionLabel.WALK_BACKWARD: (16.0, 0.55),
}


@dataclass(frozen=True)
class MotionProfile:
    label: MotionLabel
    spatial_gain: tuple
    amplitude_kpa: float
    duty: float = 0.5  # active fraction of one repetition
    edge_s: float = 0.1  # raised-cosine edge width
    rep_hz: float = 0.5

    def __post_init__(self):
        g = tuple(float(v) for v in self.spatial_gain)
        if len(g) != N_CHANNELS or any(v < 0 or v > 1 for v in g) or max(g) <= 0:
            raise ValueError("spatial_gain needs 16 values in [0, 1] with at least one > 0")
        object.__setattr__(self, "spatial_gain", g)


def default_profile(motion: MotionLabel) -> MotionProfile:
    if motion not in DEFAULT_GAINS:
        raise UnknownMotion(f"no default profile for {motion}")
    amp, duty = _DEFAULT_SHAPES[motion]
    return MotionProfile(motion, DEFAULT_GAINS[motion], amp, duty)


@dataclass(frozen=True)
class SimConfig:
    subjects: int = 10
    sets_per_motion: int = 4
    trial_s: float = 90.0
    sample_rate_hz: float = 60.0
    noise_sigma: float = 0.02
    drift_per_s: float = 1e-4  # volts per second
    subject_scale_sigma: float = 0.15
    gain_jitter_sigma: float = 0.05
    set_scale_sigma: float = 0.05
    rep_amplitude_sigma: float = 0.1  # log-normal spread between repetitions
    rep_jitter_s: float = 0.15  # max late start of a repetition
    preamble_s: float = DEFAULT_BASELINE_S
    v0_volts: float = 1.0
    seed: int = 0
    pressure: PressureModel = field(default_factory=PressureModel)

    def __post_init__(self):
        if self.subjects < 1 or self.sets_per_motion < 1:
            raise ValueError("subjects and sets_per_motion must be >= 1")
        if not (self.trial_s > self.preamble_s >= 0 and self.sample_rate_hz > 0 and self.v0_volts > 0):
            raise ValueError("invalid timing or baseline parameters")
        if min(self.noise_sigma, self.drift_per_s, self.subject_scale_sigma, self.gain_jitter_sigma,
               self.set_scale_sigma, self.rep_amplitude_sigma, self.rep_jitter_s) < 0:
            raise ValueError("noise and variation parameters must be non-negative")


def subject_id(subject: int) -> str:
    return f"S{int(subject):02d}"


def _rng(cfg: SimConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=tuple(key)))


def _subject_variation(cfg: SimConfig, subject: int) -> Tuple[float, np.ndarray]:
    rng = _rng(cfg, 0, int(subject))
    scale = float(np.exp(rng.normal(0.0, cfg.subject_scale_sigma)))
    jitter = np.exp(rng.normal(0.0, cfg.gain_jitter_sigma, N_CHANNELS))
    return scale, jitter


def time_axis(n: int, sample_rate_hz: float) -> Tuple[np.ndarray, np.ndarray]:
    """Integer microsecond timestamps and matching seconds for ``n`` samples."""
    k = np.arange(n)
    ts_us = np.round(k * (1e6 / sample_rate_hz)).astype(np.int64)
    return ts_us, ts_us / 1e6


def flat_top_burst(t, start: float, duration: float, edge_s: float) -> np.ndarray:
    """Unit pulse on ``[start, start + duration]`` with raised-cosine ramps of
    width ``edge_s`` inside the interval."""
    t = np.asarray(t, dtype=float)
    u = t - start
    out = np.zeros_like(t)
    inside = (u >= 0) & (u <= duration)
    e = min(edge_s, duration / 2)
    if e <= 0:
        out[inside] = 1.0
        return out
    rise = inside & (u < e)
    fall = inside & (u > duration - e)
    out[inside] = 1.0
    out[rise] = 0.5 - 0.5 * np.cos(np.pi * u[rise] / e)
    out[fall] = 0.5 - 0.5 * np.cos(np.pi * (duration - u[fall]) / e)
    return out


def centered_edge_pulse(t, start: float, duration: float, edge_s: float) -> np.ndarray:
    """Unit pulse whose raised-cosine edges are centred on ``start`` and
    ``start + duration``, so it is exactly 0.5 at both boundaries and the
    half-amplitude width equals ``duration``."""
    return flat_top_burst(t, start - edge_s / 2, duration + edge_s, edge_s)


def _to_volts(rel: np.ndarray, t: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, cfg.noise_sigma, rel.shape) if cfg.noise_sigma > 0 else 0.0
    return cfg.v0_volts * (1.0 + rel + noise) + cfg.drift_per_s * t[:, None]


@dataclass
class GroundTruth:
    kind: str
    events: Dict[str, List[float]] = field(default_factory=dict)
    values: Dict[str, float] = field(default_factory=dict)
    rest_segment: Tuple[float, float] = (0.0, DEFAULT_BASELINE_S)


def synth_session(motion, subject: int, set_index: int, cfg: SimConfig = SimConfig(),
                  profile: Optional[MotionProfile] = None) -> Tuple[Session, GroundTruth]:
    """One ``trial_s`` recording: ``preamble_s`` of rest, then repetitions.

    Repetition k starts at ``preamble_s + k / rep_hz`` plus a late jitter of
    up to ``rep_jitter_s``; only repetitions that fit inside the trial are
    generated.
    """
    if not isinstance(motion, MotionLabel):
        try:
            motion = MotionLabel.parse(str(motion))
        except ValueError:
            raise UnknownMotion(f"unknown motion {motion!r}") from None
    if not 1 <= set_index <= 4:
        raise ValueError("set_index must be in 1..4")
    n = int(round(cfg.trial_s * cfg.sample_rate_hz))
    ts_us, t = time_axis(n, cfg.sample_rate_hz)
    rng = _rng(cfg, 1, int(subject), motion.index, int(set_index))
    truth = GroundTruth("motion", rest_segment=(0.0, cfg.preamble_s))

    if motion is MotionLabel.REST:
        rel = np.zeros((n, N_CHANNELS))
        truth.events["burst_start"] = []
    else:
        prof = profile or default_profile(motion)
        scale, jitter = _subject_variation(cfg, subject)
        set_scale = float(np.exp(rng.normal(0.0, cfg.set_scale_sigma)))
        period = 1.0 / prof.rep_hz
        active = prof.duty * period
        n_bursts = int(math.floor((cfg.trial_s - cfg.preamble_s) * prof.rep_hz + 1e-9))
        # repetitions start late by up to rep_jitter_s, never early, so the
        # preamble stays quiet; the last one must still end inside the trial
        slack = max(0.0, min(cfg.rep_jitter_s, period - active))
        starts = [cfg.preamble_s + k * period + float(rng.uniform(0.0, slack)) for k in range(n_bursts)]
        amps = np.exp(rng.normal(0.0, cfg.rep_amplitude_sigma, n_bursts))
        shape = np.zeros(n)
        for s0, a in zip(starts, amps):
            shape += a * flat_top_burst(t, s0, active, prof.edge_s)
        gains = np.asarray(prof.spatial_gain) * jitter * scale * set_scale
        pressure = np.clip(shape[:, None] * gains[None, :] * prof.amplitude_kpa, 0.0, None)
        rel = pressure_to_relative(pressure, cfg.pressure)
        truth.events["burst_start"] = starts
        truth.values.update(duty=prof.duty, rep_hz=prof.rep_hz, burst_s=active)

    volts = _to_volts(rel, t, cfg, rng)
    session = Session(subject_id(subject), motion, set_index, ts_us, volts, None, cfg.sample_rate_hz)
    return session, truth


# --------------------------------------------------------------------------
# health-assessment scenarios


@dataclass(frozen=True)
class GaitParams:
    cycle_s: float = 1.2
    stance_duty: float = 0.60
    duration_s: float = 24.0
    amplitude_kpa: float = 8.0
    edge_s: float = 0.1
    lead_in_s: float = 0.5  # quiet time between the preamble and the first stance


@dataclass(frozen=True)
class ChairStandParams:
    n_stands: int = 12
    window_s: float = 30.0
    amplitude_kpa: float = 25.0
    timing_jitter: float = 0.1  # fraction of the slot spacing
    amplitude_jitter: float = 0.2
    tail_s: float = 2.0


@dataclass(frozen=True)
class TandemParams:
    shake_s: Optional[float] = 8.0
    loss_s: Optional[float] = 12.0
    duration_s: float = 16.0
    hold_kpa: float = 6.0  # steady calf load while holding the stance
    settle_s: float = 0.5  # time from the end of the preamble to reaching the hold
    shake_kpa: float = 2.9
    shake_hz: float = 2.0
    loss_kpa: float = 25.0


_HEALTH_GAINS = {
    "gait": DEFAULT_GAINS[MotionLabel.WALK_FORWARD],
    "chairstand": DEFAULT_GAINS[MotionLabel.LIFT_HEEL],
    "tandem": DEFAULT_GAINS[MotionLabel.STANDING_FOOT_INVERSION],
}


def gait_pressure_shape(t, params: GaitParams, first_stance_s: float, end_s: float) -> Tuple[np.ndarray, List[float]]:
    """Noiseless unit stance waveform and the stance start times."""
    starts = []
    s0 = first_stance_s
    while s0 + params.cycle_s <= end_s + 1e-9:
        starts.append(s0)
        s0 += params.cycle_s
    stance = params.stance_duty * params.cycle_s
    shape = np.zeros_like(np.asarray(t, dtype=float))
    for s in starts:
        shape += centered_edge_pulse(t, s, stance, params.edge_s)
    return shape, starts


def synth_health(scenario: str, params=None, cfg: SimConfig = SimConfig(),
                 subject: int = 1) -> Tuple[Session, GroundTruth]:
    """Recording for one of the health tests: ``gait``, ``chairstand`` or ``tandem``.

    All scenarios start with ``cfg.preamble_s`` seconds of quiet signal for
    the baseline; the ground truth names a rest segment inside it (tandem:
    the steady hold before the shake).
    """
    scenario = scenario.lower()
    if scenario not in _HEALTH_GAINS:
        raise InvalidScenarioParams(f"unknown scenario {scenario!r}")
    defaults = {"gait": GaitParams, "chairstand": ChairStandParams, "tandem": TandemParams}[scenario]
    if params is None:
        params = defaults()
    elif isinstance(params, dict):
        params = defaults(**params)
    rng = _rng(cfg, 2, int(subject), ("gait", "chairstand", "tandem").index(scenario))
    # per-subject gain jitter only: the scenario amplitudes are the knobs
    _, jitter = _subject_variation(cfg, subject)
    gains = np.asarray(_HEALTH_GAINS[scenario]) * jitter
    pre = cfg.preamble_s
    truth = GroundTruth(scenario, rest_segment=(0.0, pre))

    if scenario == "gait":
        p = params
        if not (p.cycle_s > 0 and 0 < p.stance_duty < 1 and p.duration_s > 0 and p.amplitude_kpa > 0):
            raise InvalidScenarioParams("gait needs cycle_s > 0, 0 < stance_duty < 1, positive duration and amplitude")
        if p.edge_s >= min(p.stance_duty, 1 - p.stance_duty) * p.cycle_s:
            raise InvalidScenarioParams("edge_s must be shorter than both phases")
        total = pre + p.lead_in_s + p.duration_s + p.lead_in_s
        n = int(round(total * cfg.sample_rate_hz))
        ts_us, t = time_axis(n, cfg.sample_rate_hz)
        shape, starts = gait_pressure_shape(t, p, pre + p.lead_in_s, pre + p.lead_in_s + p.duration_s)
        pressure = shape[:, None] * gains[None, :] * p.amplitude_kpa
        stance = p.stance_duty * p.cycle_s
        truth.events["stance_start"] = starts
        truth.events["stance_end"] = [s + stance for s in starts]
        truth.values.update(
            stance_pct=100.0 * p.stance_duty,
            swing_pct=100.0 * (1 - p.stance_duty),
            cycle_s=p.cycle_s,
            cadence_spm=60.0 / p.cycle_s,
        )
    elif scenario == "chairstand":
        p = params
        if not (p.n_stands >= 1 and p.window_s > 0 and p.amplitude_kpa > 0 and 0 <= p.timing_jitter < 0.5):
            raise InvalidScenarioParams("chairstand needs n_stands >= 1, positive window and amplitude")
        spacing = p.window_s / p.n_stands
        if spacing < 1.2:
            raise InvalidScenarioParams(f"{p.n_stands} stands in {p.window_s} s are too dense to separate")
        total = pre + p.window_s + p.tail_s
        n = int(round(total * cfg.sample_rate_hz))
        ts_us, t = time_axis(n, cfg.sample_rate_hz)
        width = min(1.2, 0.6 * spacing)
        centres = pre + (np.arange(p.n_stands) + 0.5) * spacing
        centres = centres + rng.uniform(-1, 1, p.n_stands) * p.timing_jitter * spacing
        amps = p.amplitude_kpa * (1 + rng.uniform(-1, 1, p.n_stands) * p.amplitude_jitter)
        shape = np.zeros(n)
        for c, a in zip(centres, amps):
            u = (t - c) / width
            inside = np.abs(u) <= 0.5
            shape[inside] += a * (0.5 + 0.5 * np.cos(2 * np.pi * u[inside]))
        pressure = shape[:, None] * gains[None, :]
        truth.events["stand_time"] = [float(c) for c in centres]
        truth.values.update(count=float(p.n_stands), window_start_s=pre, window_s=p.window_s)
    else:
        p = params
        hold_from = pre + p.settle_s
        quiet_from = hold_from + 1.0  # the step into the hold has died out
        for name, when in (("shake_s", p.shake_s), ("loss_s", p.loss_s)):
            if when is not None and not quiet_from + 1.0 <= when < p.duration_s:
                raise InvalidScenarioParams(
                    f"{name} must leave at least 1 s of steady hold after {quiet_from:g} s and precede the end")
        if p.shake_s is not None and p.loss_s is not None and p.loss_s < p.shake_s:
            raise InvalidScenarioParams("balance loss cannot precede shaking")
        if not (p.hold_kpa >= 0 and p.shake_kpa > 0 and p.loss_kpa > 0):
            raise InvalidScenarioParams("tandem pressures must be positive")
        n = int(round(p.duration_s * cfg.sample_rate_hz))
        ts_us, t = time_axis(n, cfg.sample_rate_hz)
        shape = p.hold_kpa * flat_top_burst(t, hold_from - 0.3, p.duration_s + 1.0, 0.3)
        if p.shake_s is not None:
            end = p.loss_s if p.loss_s is not None else p.duration_s
            on = (t >= p.shake_s) & (t < end)
            shape[on] += p.shake_kpa * 0.5 * (1 - np.cos(2 * np.pi * p.shake_hz * (t[on] - p.shake_s)))
        if p.loss_s is not None:
            u = t - p.loss_s
            on = u >= 0
            ramp = np.clip(u[on] / 0.1, 0.0, 1.0)
            shape[on] += p.loss_kpa * ramp * (0.6 + 0.4 * np.sin(2 * np.pi * 1.3 * u[on]))
        pressure = shape[:, None] * gains[None, :]
        first = min(x for x in (p.shake_s, p.loss_s, p.duration_s) if x is not None)
        truth.rest_segment = (quiet_from, first - 0.5)
        truth.events["shake_onset"] = [p.shake_s] if p.shake_s is not None else []
        truth.events["balance_loss"] = [p.loss_s] if p.loss_s is not None else []

    rel = pressure_to_relative(np.clip(pressure, 0.0, None), cfg.pressure)
    volts = _to_volts(rel, t, cfg, rng)
    session = Session(subject_id(subject), None, 1, ts_us, volts, None, cfg.sample_rate_hz)
    return session, truth


# --------------------------------------------------------------------------
# corpus export and streaming


def iter_corpus(cfg: SimConfig = SimConfig(), motions=None) -> Iterator[Tuple[Session, GroundTruth]]:
    motions = tuple(motions) if motions is not None else MotionLabel.motions()
    for subject in range(1, cfg.subjects + 1):
        for motion in motions:
            for set_index in range(1, cfg.sets_per_motion + 1):
                yield synth_session(motion, subject, set_index, cfg)


def export_dataset(out_dir, cfg: SimConfig = SimConfig(), motions=None) -> int:
    """Write ``subject_motion_set.csv`` files plus ``manifest.csv`` and
    ``ground_truth.csv``. Returns the number of session files."""
    os.makedirs(out_dir, exist_ok=True)
    manifest, truth_rows = [], []
    for session, truth in iter_corpus(cfg, motions):
        name = session_filename(session.subject_id, session.motion, session.set_index)
        write_csv(session, os.path.join(out_dir, name))
        manifest.append([name, session.subject_id, session.motion.value, session.set_index,
                         len(session), f"{session.sample_rate_hz:g}"])
        for event, times in truth.events.items():
            for t0 in times:
                truth_rows.append([name, event, f"{t0:.6f}", f"{truth.values.get('burst_s', 0.0):.6f}"])
    write_rows(os.path.join(out_dir, "manifest.csv"),
               ["file", "subject", "motion", "set", "n_frames", "sample_rate_hz"], manifest)
    write_rows(os.path.join(out_dir, "ground_truth.csv"), ["file", "event", "time_s", "duration_s"], truth_rows)
    return len(manifest)


@dataclass
class SendStats:
    frames_sent: int = 0
    bytes_sent: int = 0
    elapsed_s: float = 0.0


def session_to_wire(session: Session, scale: AdcScale = AdcScale()) -> List[bytes]:
    counts = np.clip(np.round(session.volts * scale.full_scale / scale.vref), 0, scale.full_scale)
    counts = counts.astype(np.int64)
    return [
        encode_frame(WireFrame(int(seq) & 0xFFFFFFFF, int(ts), row))
        for seq, ts, row in zip(session.seq, session.timestamps_us, counts.tolist())
    ]


def stream_session(session: Session, endpoint: str, rate_multiplier: float = 1.0,
                   scale: AdcScale = AdcScale(), timeout: float = 5.0) -> SendStats:
    """Send ``session`` over TCP in wire format, paced at
    ``rate_multiplier`` times real time (``inf`` sends as fast as possible).

    Frames are encoded before the clock starts so pacing does not depend on
    encoding speed.

    Raises:
        ConnectionRefusedError: nothing listens at ``endpoint``.
        BackpressureTimeout: the receiver stopped draining for ``timeout`` s.
    """
    if not rate_multiplier > 0:
        raise ValueError("rate_multiplier must be positive")
    payloads = session_to_wire(session, scale)
    rel_s = (session.timestamps_us - session.timestamps_us[0]) / 1e6 if len(session) else np.zeros(0)
    due = rel_s / rate_multiplier
    host, port = parse_endpoint(endpoint)
    stats = SendStats()
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(timeout)
        t0 = time.perf_counter()
        i, n = 0, len(payloads)
        try:
            while i < n:
                now = time.perf_counter() - t0
                j = i
                while j < n and due[j] <= now:
                    j += 1
                if j == i:
                    time.sleep(min(due[i] - now, 0.05))
                    continue
                chunk = b"".join(payloads[i:j])
                sock.sendall(chunk)
                stats.frames_sent += j - i
                stats.bytes_sent += len(chunk)
                i = j
        except socket.timeout as exc:
            raise BackpressureTimeout(f"receiver stalled for {timeout} s") from exc
        stats.elapsed_s = time.perf_counter() - t0
    return stats
