import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calfsense.core import N_CHANNELS, NormalizedSeries, estimate_baseline, normalize
from calfsense.errors import EmptySeries, NoCyclesDetected, NoRestSegment, SeriesTooShort
from calfsense.health import (
    ChairStandReport,
    EventParams,
    GaitReport,
    TandemReport,
    activation_envelope,
    chair_stand_count,
    event_rows,
    gait_analyze,
    moving_average,
    report_lines,
    rolling_std,
    tandem_analyze,
    write_plot_data,
)
from calfsense.simulator import SimConfig, TandemParams, synth_health


def simulated(scenario, params=None, subject=1, **cfg):
    session, truth = synth_health(scenario, params, SimConfig(**cfg), subject)
    return normalize(session, estimate_baseline(session, 2.0)), truth


def flat_series(seconds, rate=60.0):
    return NormalizedSeries(np.zeros((int(seconds * rate), N_CHANNELS)), rate)


def padded_average(x, width):
    """Centred moving average written out sample by sample."""
    left = (width - 1) // 2
    out = []
    for i in range(len(x)):
        acc = 0.0
        for k in range(i - left, i - left + width):
            acc += x[min(max(k, 0), len(x) - 1)]
        out.append(acc / width)
    return np.array(out)


# ---------------------------------------------------------------- params


def test_event_params_invariants():
    EventParams()
    with pytest.raises(ValueError):
        EventParams(smooth_s=0)
    with pytest.raises(ValueError):
        EventParams(theta_factor=1.0, release_factor=1.5)
    with pytest.raises(ValueError):
        EventParams(release_fraction=0.5)


# ---------------------------------------------------------------- envelope


def test_zero_series_has_zero_envelope():
    assert np.all(activation_envelope(flat_series(3)) == 0.0)
    with pytest.raises(EmptySeries):
        activation_envelope(NormalizedSeries(np.zeros((0, N_CHANNELS)), 60.0))


def test_single_channel_envelope_is_its_magnitude_over_sixteen():
    rng = np.random.default_rng(0)
    x = np.zeros((300, N_CHANNELS))
    x[:, 6] = rng.normal(size=300)
    env = activation_envelope(NormalizedSeries(x, 60.0))
    assert env == pytest.approx(padded_average(np.abs(x[:, 6]) / 16, 15), abs=1e-12)


def test_step_ramps_to_level_over_the_smoothing_width():
    h, n, k0 = 0.8, 300, 150
    x = np.zeros((n, N_CHANNELS))
    x[k0:, 2] = h
    env = activation_envelope(NormalizedSeries(x, 60.0), EventParams(smooth_s=0.25))
    w = 15
    ref = np.array([min(max(i + w // 2 + 1 - k0, 0), w) for i in range(n)]) / w * h / 16
    assert env == pytest.approx(ref, abs=1e-12)
    assert env[k0 + w] == pytest.approx(h / 16)
    assert env[k0 - w] == 0.0


def test_moving_average_and_rolling_std_oracles():
    rng = np.random.default_rng(1)
    x = rng.normal(size=50)
    for w in (1, 2, 5, 8):
        assert moving_average(x, w) == pytest.approx(padded_average(x, w), abs=1e-12)
    w = 6
    left = (w - 1) // 2
    ref = [np.std([x[min(max(k, 0), 49)] for k in range(i - left, i - left + w)]) for i in range(50)]
    assert rolling_std(x, w) == pytest.approx(ref, abs=1e-12)


# ---------------------------------------------------------------- gait


def test_gait_from_simulator():
    series, truth = simulated("gait")
    rep = gait_analyze(series, EventParams(), truth.rest_segment)
    assert abs(rep.stance_pct - 60.0) <= 3.0
    assert abs(rep.swing_pct - 40.0) <= 3.0
    assert rep.cadence_spm == pytest.approx(truth.values["cadence_spm"], rel=0.02)
    assert len(rep.cycles) >= len(truth.events["stance_start"]) - 2
    assert rep.stance_pct + rep.swing_pct == pytest.approx(100.0, abs=1e-9)
    for _, stance, swing in rep.cycles:
        assert stance > 0 and swing > 0


@pytest.mark.parametrize("subject", range(1, 11))
def test_gait_tolerates_drift_across_subjects(subject):
    # drift lifts the rectified floor over time; no swing may be missed
    series, truth = simulated("gait", subject=subject)
    rep = gait_analyze(series, EventParams(), truth.rest_segment)
    assert max(c[1] + c[2] for c in rep.cycles) < 1.5 * truth.values["cycle_s"]
    assert rep.cadence_spm == pytest.approx(50.0, rel=0.02)


def test_noiseless_gait_is_exact():
    series, truth = simulated("gait", noise_sigma=0.0, drift_per_s=0.0)
    rep = gait_analyze(series, EventParams(), (0.0, 2.0))
    assert rep.stance_pct == pytest.approx(60.0, abs=0.1)
    starts = np.array(truth.events["stance_start"])
    assert np.min(np.abs(starts[:, None] - np.array([c[0] for c in rep.cycles])[None, :]), axis=0).max() < 0.02


def test_constant_signal_has_no_cycles():
    with pytest.raises(NoCyclesDetected):
        gait_analyze(flat_series(10))


def test_rest_segment_must_hold_samples():
    with pytest.raises(NoRestSegment):
        gait_analyze(flat_series(10), EventParams(), (20.0, 25.0))
    with pytest.raises(NoRestSegment):
        tandem_analyze(flat_series(10), EventParams(), None)


@settings(max_examples=15)
@given(st.floats(0.05, 20.0))
def test_gait_is_scale_invariant(a):
    series, truth = simulated("gait")
    base = gait_analyze(series, EventParams(), truth.rest_segment)
    scaled = NormalizedSeries(a * series.x, series.sample_rate_hz, series.t_s)
    rep = gait_analyze(scaled, EventParams(), truth.rest_segment)
    assert len(rep.cycles) == len(base.cycles)
    assert rep.stance_pct == pytest.approx(base.stance_pct, abs=1e-6)


def test_inverted_polarity():
    series, truth = simulated("gait")
    flipped = NormalizedSeries(1.0 - series.x, series.sample_rate_hz, series.t_s)
    # |1 - x| drops while the sensor is loaded, so stance is the low phase
    rep = gait_analyze(flipped, EventParams(), truth.rest_segment, invert=True)
    assert abs(rep.stance_pct - 60.0) <= 3.0


# ---------------------------------------------------------------- chair stand


def test_chair_stand_counts_simulated_stands():
    series, truth = simulated("chairstand")
    rep = chair_stand_count(series, EventParams(), 30.0, truth.values["window_start_s"])
    assert rep.count == 12 == len(rep.stand_times_s)
    assert np.all(np.diff(rep.stand_times_s) > 0)
    assert all(2.0 <= x < 32.0 for x in rep.stand_times_s)
    assert np.max(np.abs(np.array(rep.stand_times_s) - truth.events["stand_time"])) < 0.2


def test_flat_signal_has_no_stands():
    assert chair_stand_count(flat_series(31)).count == 0


def test_chair_stand_needs_the_whole_window():
    with pytest.raises(SeriesTooShort):
        chair_stand_count(flat_series(20), EventParams(), 30.0)


@settings(max_examples=20)
@given(st.floats(0.001, 0.5), st.floats(0.001, 0.5), st.integers(1, 5))
def test_count_is_monotone_in_prominence(p1, p2, subject):
    lo, hi = sorted((p1, p2))
    series, _ = simulated("chairstand", subject=subject)
    a = chair_stand_count(series, EventParams(min_prominence=lo), 30.0, 2.0).count
    b = chair_stand_count(series, EventParams(min_prominence=hi), 30.0, 2.0).count
    assert a >= b


# ---------------------------------------------------------------- tandem


def test_tandem_events_from_simulator():
    series, truth = simulated("tandem")
    rep = tandem_analyze(series, EventParams(), truth.rest_segment)
    assert abs(rep.shake_onset_s - 8.0) <= 0.5
    assert abs(rep.balance_loss_s - 12.0) <= 0.5
    assert rep.shake_onset_s <= rep.balance_loss_s


def test_steady_stance_has_no_events():
    series, truth = simulated("tandem", TandemParams(shake_s=None, loss_s=None))
    rep = tandem_analyze(series, EventParams(), truth.rest_segment)
    assert rep.shake_onset_s is None and rep.balance_loss_s is None
    assert tandem_analyze(flat_series(10), EventParams(), (0, 2)).shake_onset_s is None


def test_shake_without_loss():
    series, truth = simulated("tandem", TandemParams(loss_s=None))
    rep = tandem_analyze(series, EventParams(), truth.rest_segment)
    assert abs(rep.shake_onset_s - 8.0) <= 0.5
    assert rep.balance_loss_s is None


def test_loss_without_shake_reports_both_at_the_loss():
    series, truth = simulated("tandem", TandemParams(shake_s=None))
    rep = tandem_analyze(series, EventParams(), truth.rest_segment)
    assert abs(rep.balance_loss_s - 12.0) <= 0.5
    assert rep.shake_onset_s <= rep.balance_loss_s


@settings(max_examples=10)
@given(st.integers(1, 50))
def test_event_times_lie_inside_the_series(subject):
    for scenario in ("gait", "chairstand", "tandem"):
        series, truth = simulated(scenario, subject=subject)
        t_end = series.t_s[-1] - series.t_s[0]
        if scenario == "gait":
            rep = gait_analyze(series, EventParams(), truth.rest_segment)
            times = [c[0] for c in rep.cycles] + [c[0] + c[1] + c[2] for c in rep.cycles]
        elif scenario == "chairstand":
            times = chair_stand_count(series, EventParams(), 30.0, 2.0).stand_times_s
        else:
            rep = tandem_analyze(series, EventParams(), truth.rest_segment)
            times = [v for v in (rep.shake_onset_s, rep.balance_loss_s) if v is not None]
        assert all(0.0 <= x <= t_end for x in times)


# ---------------------------------------------------------------- output


def test_report_lines_include_parameters():
    params = EventParams(theta_factor=4.0)
    rep = ChairStandReport(2, 30.0, [3.0, 5.0], 2.0)
    lines = report_lines(rep, params, {"source": "x.csv"})
    assert "count = 2" in lines
    assert "params.theta_factor = 4" in lines
    assert "source = x.csv" in lines
    assert sum(l.startswith("params.") for l in lines) == len(params.as_dict())


def test_event_rows_and_plot_data(tmp_path):
    series, truth = simulated("gait")
    rep = gait_analyze(series, EventParams(), truth.rest_segment)
    header, rows = event_rows(rep)
    assert header[0] == "cycle" and len(rows) == len(rep.cycles)
    write_plot_data(tmp_path / "plot.csv", rep)
    lines = (tmp_path / "plot.csv").read_text().splitlines()
    assert len(lines) == len(series) + 1
    assert lines[0].startswith("t_s,envelope")
    assert any("stance_start" in l for l in lines[1:])
    t_rep = TandemReport(None, None, 0.1)
    assert event_rows(t_rep) == (("event", "time_s"), [])
    assert GaitReport.cadence_unit.startswith("cycles/min")
