"""Gait phases, chair-stand counting and tandem-stance timing from the
activation envelope of a normalized recording.

All times in reports are seconds from the first sample of the series.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from .core import NormalizedSeries
from .errors import EmptySeries, NoCyclesDetected, NoRestSegment, SeriesTooShort


@dataclass(frozen=True)
class EventParams:
    smooth_s: float = 0.25
    theta_factor: float = 3.0
    release_factor: float = 1.5
    min_event_gap_s: float = 0.4
    min_prominence: float = 0.05
    min_peak_gap_s: float = 1.0
    loss_factor: float = 10.0  # balance loss threshold, multiples of rest_sigma
    rolling_s: float = 0.5  # rolling-sigma window for tandem stance
    shake_sustain_s: float = 0.5  # how long sigma must stay high to count as shaking
    min_rise_factor: float = 10.0  # a stance must rise this many rest_sigma above the rest mean
    release_fraction: float = 0.25  # gait release level as a fraction of the activation range

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if not self.theta_factor > self.release_factor:
            raise ValueError("theta_factor must exceed release_factor")
        if not self.release_fraction < 0.5:
            raise ValueError("release_fraction must be below 0.5")

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class GaitReport:
    cycles: List[Tuple[float, float, float]]  # (start_s, stance_s, swing_s)
    stance_pct: float
    swing_pct: float
    cadence_spm: float  # gait cycles per minute for the instrumented leg
    cycle_s: float
    trace: Optional[dict] = field(default=None, repr=False, compare=False)

    cadence_unit = "cycles/min (one instrumented leg)"


@dataclass
class ChairStandReport:
    count: int
    window_s: float
    stand_times_s: List[float]
    window_start_s: float = 0.0
    trace: Optional[dict] = field(default=None, repr=False, compare=False)


@dataclass
class TandemReport:
    shake_onset_s: Optional[float]
    balance_loss_s: Optional[float]
    rest_sigma: float
    trace: Optional[dict] = field(default=None, repr=False, compare=False)


def moving_average(x: np.ndarray, width: int) -> np.ndarray:
    """Centred moving average; the ends are padded with the nearest sample."""
    x = np.asarray(x, dtype=float)
    if width <= 1 or x.size == 0:
        return x.copy()
    left = (width - 1) // 2
    padded = np.pad(x, (left, width - 1 - left), mode="edge")
    c = np.concatenate(([0.0], np.cumsum(padded)))
    return (c[width:] - c[:-width]) / width


def activation_envelope(series: NormalizedSeries, params: EventParams = EventParams()) -> np.ndarray:
    """Mean absolute value across channels, smoothed over ``smooth_s``."""
    if len(series) == 0:
        raise EmptySeries("series has no samples")
    raw = np.abs(series.x).mean(axis=1)
    width = max(1, int(round(params.smooth_s * series.sample_rate_hz)))
    return moving_average(raw, width)


def _rel_time(series: NormalizedSeries) -> np.ndarray:
    return series.t_s - series.t_s[0]


def rest_statistics(series: NormalizedSeries, env: np.ndarray, rest_segment) -> Tuple[float, float]:
    """Mean and standard deviation of the envelope inside ``rest_segment``."""
    if rest_segment is None:
        raise NoRestSegment("a rest segment is required")
    start, end = rest_segment
    mask = series.time_mask(float(start), float(end))
    if np.count_nonzero(mask) < 2:
        raise NoRestSegment(f"rest segment {start}..{end} s holds fewer than 2 samples")
    seg = env[mask]
    return float(seg.mean()), float(seg.std())


def hysteresis_segments(env: np.ndarray, high: float, low: float) -> List[Tuple[int, int]]:
    """Half-open index ranges where ``env`` rises above ``high`` and has not
    yet fallen to ``low``."""
    segs, on, start = [], False, 0
    for i, v in enumerate(env):
        if not on and v > high:
            on, start = True, i
        elif on and v <= low:
            segs.append((start, i))
            on = False
    if on:
        segs.append((start, len(env)))
    return segs


def _merge_close(segs, t, min_gap_s):
    """Fold a segment into its predecessor when its onset comes less than
    ``min_gap_s`` after the predecessor's onset (debounce)."""
    out = []
    for s in segs:
        if out and t[s[0]] - t[out[-1][0]] < min_gap_s:
            out[-1] = (out[-1][0], s[1])
        else:
            out.append(s)
    return out


def _crossing(t, env, i, level):
    """Time where the envelope crosses ``level`` between samples i and i+1."""
    a, b = env[i], env[i + 1]
    if b == a:
        return float(t[i])
    return float(t[i] + (level - a) / (b - a) * (t[i + 1] - t[i]))


def _half_level_edges(t, env, seg, base):
    """Refine an above-threshold range to its half-amplitude crossings.

    The plateau is the upper quartile of the segment rather than its
    maximum, which would be biased upwards by noise.
    """
    s, e = seg
    level = base + 0.5 * (np.percentile(env[s:e], 75) - base)
    above = np.flatnonzero(env[s:e] >= level) + s
    first, last = int(above[0]), int(above[-1])
    rise = _crossing(t, env, first - 1, level) if first > 0 else float(t[first])
    fall = _crossing(t, env, last, level) if last + 1 < len(env) else float(t[last])
    return rise, fall


def gait_analyze(series: NormalizedSeries, params: EventParams = EventParams(),
                 rest_segment=(0.0, 2.0), invert: bool = False) -> GaitReport:
    """Stance/swing timing from the activation envelope.

    Stance is high activation (``invert`` flips the polarity). Hysteresis on
    the rest statistics, raised to ``release_fraction`` of the activation
    range when that is larger, finds stance segments; each is then timed between
    its half-amplitude crossings, which keeps the estimate independent of
    the envelope smoothing and of the overall signal scale. Segments touching
    the ends of the recording are incomplete and are ignored, as are those
    whose peak stays below ``min_rise_factor * rest_sigma`` above the rest
    mean.

    Raises:
        NoRestSegment: ``rest_segment`` holds fewer than 2 samples.
        NoCyclesDetected: fewer than two complete stance phases.
    """
    env = activation_envelope(series, params)
    mu, sigma = rest_statistics(series, env, rest_segment)
    sig = -env if invert else env
    base = -mu if invert else mu
    # slow drift lifts the rectified noise floor during short swings, so the
    # thresholds also follow the recording's own activation range
    span = max(float(np.percentile(sig, 95)) - base, 0.0)
    high = base + max(params.theta_factor * sigma, 2.0 * params.release_fraction * span)
    low = base + max(params.release_factor * sigma, params.release_fraction * span)
    t = _rel_time(series)

    segs = _merge_close(hysteresis_segments(sig, high, low), t, params.min_event_gap_s)
    segs = [s for s in segs if s[0] > 0 and s[1] < len(sig)]
    # slow drift can push the rectified noise floor across the thresholds;
    # a real stance rises far above it
    segs = [s for s in segs if sig[s[0]:s[1]].max() >= base + params.min_rise_factor * sigma]
    edges = [_half_level_edges(t, sig, s, base) for s in segs]

    cycles = []
    for (r0, f0), (r1, _) in zip(edges, edges[1:]):
        stance, swing = f0 - r0, r1 - f0
        if stance > 0 and swing > 0:
            cycles.append((r0, stance, swing))
    if not cycles:
        raise NoCyclesDetected("no complete stance/swing cycle found")

    stance_frac = np.array([c[1] / (c[1] + c[2]) for c in cycles])
    stance_pct = float(100.0 * stance_frac.mean())
    cycle_s = float(np.mean([c[1] + c[2] for c in cycles]))
    trace = {"t": t, "envelope": env, "high": (-high if invert else high),
             "low": (-low if invert else low), "events": [("stance_start", r) for r, _ in edges]
             + [("stance_end", f) for _, f in edges]}
    return GaitReport(cycles, stance_pct, 100.0 - stance_pct, 60.0 / cycle_s, cycle_s, trace)


def chair_stand_count(series: NormalizedSeries, params: EventParams = EventParams(),
                      window_s: float = 30.0, start_s: float = 0.0) -> ChairStandReport:
    """Count envelope peaks in ``[start_s, start_s + window_s)``.

    Peaks need prominence >= ``min_prominence`` and are at least
    ``min_peak_gap_s`` apart.

    Raises:
        SeriesTooShort: the series ends before the counting window does.
    """
    if len(series) == 0:
        raise EmptySeries("series has no samples")
    t = _rel_time(series)
    span = t[-1] + 1.0 / series.sample_rate_hz
    if span < start_s + window_s - 1e-9:
        raise SeriesTooShort(f"series spans {span:.3f} s, window needs {start_s + window_s:.3f} s")
    env = activation_envelope(series, params)
    distance = max(1, int(round(params.min_peak_gap_s * series.sample_rate_hz)))
    peaks, _ = find_peaks(env, prominence=params.min_prominence, distance=distance)
    times = [float(t[p]) for p in peaks if start_s <= t[p] < start_s + window_s]
    trace = {"t": t, "envelope": env, "events": [("stand", x) for x in times]}
    return ChairStandReport(len(times), float(window_s), times, float(start_s), trace)


def rolling_std(x: np.ndarray, width: int) -> np.ndarray:
    """Centred rolling population standard deviation, nearest-edge padded."""
    x = np.asarray(x, dtype=float)
    if width <= 1:
        return np.zeros_like(x)
    left = (width - 1) // 2
    padded = np.pad(x, (left, width - 1 - left), mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, width).std(axis=1)


def tandem_analyze(series: NormalizedSeries, params: EventParams = EventParams(),
                   rest_segment=(0.0, 2.0)) -> TandemReport:
    """Shake onset and balance loss from the rolling variability of the envelope.

    Shake onset is the start of the first run where the rolling sigma stays
    above ``theta_factor * rest_sigma`` for ``shake_sustain_s``; balance loss
    is the first sample above ``loss_factor * rest_sigma``. A loss without a
    preceding shake run reports the loss time as the shake onset.

    The rest segment marks the start of the steady stance; anything before
    it (getting into position) is not searched for events.
    """
    env = activation_envelope(series, params)
    _, rest_sigma = rest_statistics(series, env, rest_segment)
    t = _rel_time(series)
    fs = series.sample_rate_hz
    sigma = rolling_std(env, max(2, int(round(params.rolling_s * fs))))
    sigma = np.where(t >= float(rest_segment[0]) - 1e-9, sigma, 0.0)
    sustain = max(1, int(round(params.shake_sustain_s * fs)))

    shake = None
    over = sigma > params.theta_factor * rest_sigma
    run = 0
    for i, flag in enumerate(over):
        run = run + 1 if flag else 0
        if run >= sustain:
            shake = float(t[i - sustain + 1])
            break
    loss_idx = np.flatnonzero(sigma > params.loss_factor * rest_sigma)
    loss = float(t[loss_idx[0]]) if loss_idx.size else None
    if loss is not None and (shake is None or shake > loss):
        shake = loss
    trace = {"t": t, "envelope": env, "rolling_sigma": sigma,
             "shake_threshold": params.theta_factor * rest_sigma,
             "loss_threshold": params.loss_factor * rest_sigma,
             "events": [(k, v) for k, v in (("shake_onset", shake), ("balance_loss", loss)) if v is not None]}
    return TandemReport(shake, loss, rest_sigma, trace)


# --------------------------------------------------------------------------
# report output


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report_lines(report, params: EventParams, extra: Optional[dict] = None) -> List[str]:
    """Plain ``key = value`` summary, followed by the parameters used."""
    lines = [f"report = {type(report).__name__}"]
    if isinstance(report, GaitReport):
        lines += [f"cycles = {len(report.cycles)}", f"stance_pct = {_fmt(report.stance_pct)}",
                  f"swing_pct = {_fmt(report.swing_pct)}", f"cycle_s = {_fmt(report.cycle_s)}",
                  f"cadence = {_fmt(report.cadence_spm)}", f"cadence_unit = {GaitReport.cadence_unit}"]
    elif isinstance(report, ChairStandReport):
        lines += [f"count = {report.count}", f"window_start_s = {_fmt(report.window_start_s)}",
                  f"window_s = {_fmt(report.window_s)}"]
    elif isinstance(report, TandemReport):
        lines += [f"shake_onset_s = {_fmt(report.shake_onset_s)}",
                  f"balance_loss_s = {_fmt(report.balance_loss_s)}",
                  f"rest_sigma = {_fmt(report.rest_sigma)}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {_fmt(v)}")
    lines += [f"params.{k} = {_fmt(v)}" for k, v in params.as_dict().items()]
    return lines


def event_rows(report) -> Tuple[Sequence[str], List[list]]:
    """Header and rows of the per-event CSV table for ``report``."""
    if isinstance(report, GaitReport):
        rows = [[i + 1, f"{s:.6f}", f"{st:.6f}", f"{sw:.6f}", f"{100 * st / (st + sw):.4f}"]
                for i, (s, st, sw) in enumerate(report.cycles)]
        return ("cycle", "start_s", "stance_s", "swing_s", "stance_pct"), rows
    if isinstance(report, ChairStandReport):
        return ("stand", "time_s"), [[i + 1, f"{x:.6f}"] for i, x in enumerate(report.stand_times_s)]
    rows = [[name, f"{v:.6f}"] for name, v in (("shake_onset", report.shake_onset_s),
                                               ("balance_loss", report.balance_loss_s)) if v is not None]
    return ("event", "time_s"), rows


def write_plot_data(path, report) -> None:
    """Per-sample CSV (time, envelope, thresholds, event marker) for plotting."""
    tr = report.trace
    if tr is None:
        raise ValueError("report carries no trace")
    cols = [("t_s", tr["t"]), ("envelope", tr["envelope"])]
    n = len(tr["t"])
    for key in ("rolling_sigma", "high", "low", "shake_threshold", "loss_threshold"):
        if key in tr:
            cols.append((key, np.broadcast_to(np.asarray(tr[key], dtype=float), (n,))))
    marker = [""] * n
    for name, when in tr["events"]:
        i = int(np.argmin(np.abs(tr["t"] - when)))
        marker[i] = name if not marker[i] else marker[i] + ";" + name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c[0] for c in cols] + ["event"])
        for i in range(n):
            w.writerow([f"{c[1][i]:.9g}" for c in cols] + [marker[i]])
