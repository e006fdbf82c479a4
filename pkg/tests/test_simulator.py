import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from calfsense.core import MotionLabel, estimate_baseline, normalize
from calfsense.errors import InvalidScenarioParams, NegativePressure, UnknownMotion
from calfsense.health import EventParams, activation_envelope
from calfsense.simulator import (
    DEFAULT_GAINS,
    ChairStandParams,
    GaitParams,
    PressureModel,
    SimConfig,
    TandemParams,
    centered_edge_pulse,
    default_profile,
    export_dataset,
    gait_pressure_shape,
    pressure_to_relative,
    session_to_wire,
    synth_health,
    synth_session,
)
from calfsense.wire import AdcScale, decode_frame
from oracles import piecewise_pressure


# ---------------------------------------------------------------- pressure


def test_pressure_examples():
    m = PressureModel()
    assert pressure_to_relative(0.0) == 0.0
    below = m.s_low * m.knee_kpa
    assert pressure_to_relative(m.knee_kpa) == below
    assert pressure_to_relative(np.nextafter(m.knee_kpa, 0)) == pytest.approx(below, rel=1e-12)
    assert pressure_to_relative(15.0) == pytest.approx(0.225, rel=1e-12)
    with pytest.raises(NegativePressure):
        pressure_to_relative(-0.1)


@given(st.floats(0.0, 200.0))
def test_pressure_matches_piecewise_oracle(p):
    assert pressure_to_relative(p) == pytest.approx(piecewise_pressure(p), rel=1e-12, abs=1e-15)


def test_pressure_response_is_monotone_with_a_steeper_low_range():
    p = np.arange(0, 50.0 + 1e-9, 0.1)
    r = pressure_to_relative(p)
    assert np.all(np.diff(r) >= 0)
    m = PressureModel()
    assert m.s_low > m.s_high
    with pytest.raises(ValueError):
        PressureModel(s_low=0.01, s_high=0.02)


# ---------------------------------------------------------------- profiles


def test_profiles_peak_on_ch05_and_are_distinct():
    unit = {}
    for motion in MotionLabel.motions():
        prof = default_profile(motion)
        g = np.array(prof.spatial_gain)
        assert np.argmax(g) == 4 and g.max() > 0
        unit[motion] = g / np.linalg.norm(g)
    labels = list(unit)
    dmin = min(np.linalg.norm(unit[a] - unit[b]) for i, a in enumerate(labels) for b in labels[i + 1 :])
    assert dmin >= 0.15
    with pytest.raises(UnknownMotion):
        default_profile(MotionLabel.REST)
    assert set(DEFAULT_GAINS) == set(MotionLabel.motions())


# ---------------------------------------------------------------- sessions


def test_repetition_count():
    session, truth = synth_session(MotionLabel.LIFT_HEEL, 1, 1)
    assert len(session) == 5400
    assert len(truth.events["burst_start"]) == 44  # floor((90 - 2) * 0.5)
    assert min(truth.events["burst_start"]) >= 2.0


def test_noiseless_rest_is_exactly_one_volt():
    cfg = SimConfig(noise_sigma=0.0, drift_per_s=0.0)
    session, _ = synth_session(MotionLabel.REST, 3, 2, cfg)
    assert np.all(session.volts == 1.0)


def test_same_seed_same_bits_and_different_seed_differs():
    a, _ = synth_session(MotionLabel.TURN_ROUND, 2, 3, SimConfig(seed=11))
    b, _ = synth_session(MotionLabel.TURN_ROUND, 2, 3, SimConfig(seed=11))
    c, _ = synth_session(MotionLabel.TURN_ROUND, 2, 3, SimConfig(seed=12))
    assert a.volts.tobytes() == b.volts.tobytes()
    assert np.array_equal(a.timestamps_us, b.timestamps_us)
    assert not np.array_equal(a.volts, c.volts)


def test_unknown_motion():
    with pytest.raises(UnknownMotion):
        synth_session("A42", 1, 1)


def test_sim_config_rejects_negative_noise():
    with pytest.raises(ValueError):
        SimConfig(noise_sigma=-1.0)


@pytest.mark.parametrize("motion", MotionLabel.motions())
def test_rest_is_quieter_than_motion(motion):
    cfg = SimConfig(trial_s=30.0)
    stds = {}
    for m in (MotionLabel.REST, motion):
        session, _ = synth_session(m, 1, 1, cfg)
        series = normalize(session, estimate_baseline(session, 2.0)).drop_leading(120)
        stds[m] = activation_envelope(series, EventParams()).std()
    assert stds[MotionLabel.REST] < stds[motion]


# ---------------------------------------------------------------- health scenarios


def test_gait_pressure_trace_has_exact_duty():
    p = GaitParams()
    rate = 6000.0
    t = np.arange(int(30 * rate)) / rate
    shape, starts = gait_pressure_shape(t, p, 2.5, 26.5)
    assert len(starts) == 20
    for s in starts:
        sel = (t >= s - 0.2) & (t < s + p.cycle_s - 0.2)
        frac = np.count_nonzero(shape[sel] >= 0.5) / np.count_nonzero(sel)
        assert frac == pytest.approx(0.60, abs=2 / rate / p.cycle_s)


def test_centered_edge_pulse_half_amplitude_at_boundaries():
    t = np.array([1.0, 1.72, 1.5, 0.9, 1.8])
    v = centered_edge_pulse(t, 1.0, 0.72, 0.1)
    assert v[0] == pytest.approx(0.5, abs=1e-12) and v[1] == pytest.approx(0.5, abs=1e-12)
    assert v[2] == 1.0 and v[3] == 0.0 and v[4] == 0.0


def test_gait_ground_truth():
    _, truth = synth_health("gait")
    assert truth.values["stance_pct"] == pytest.approx(60.0)
    assert truth.values["cadence_spm"] == pytest.approx(50.0)
    ends = np.array(truth.events["stance_end"]) - np.array(truth.events["stance_start"])
    assert np.allclose(ends, 0.72)


def test_chairstand_ground_truth():
    session, truth = synth_health("chairstand", ChairStandParams(n_stands=12))
    times = truth.events["stand_time"]
    assert len(times) == 12 and np.all(np.diff(times) > 0)
    assert all(2.0 <= x < 32.0 for x in times)
    assert session.duration_s == pytest.approx(34.0, abs=0.02)


def test_tandem_ground_truth():
    _, truth = synth_health("tandem", TandemParams(shake_s=8.0, loss_s=12.0))
    assert truth.events == {"shake_onset": [8.0], "balance_loss": [12.0]}
    lo, hi = truth.rest_segment
    assert lo >= 2.0 and hi < 8.0


@pytest.mark.parametrize("scenario, params", [
    ("gait", {"stance_duty": 1.2}),
    ("gait", {"edge_s": 0.6}),
    ("chairstand", {"n_stands": 40}),
    ("chairstand", {"n_stands": 0}),
    ("tandem", {"shake_s": 3.0}),
    ("tandem", {"shake_s": 12.0, "loss_s": 8.0}),
    ("tandem", {"loss_s": 20.0}),
    ("hopscotch", None),
])
def test_invalid_scenarios(scenario, params):
    with pytest.raises(InvalidScenarioParams):
        synth_health(scenario, params)


def test_health_scenarios_are_deterministic():
    for scenario in ("gait", "chairstand", "tandem"):
        a, _ = synth_health(scenario, None, SimConfig(seed=4), subject=2)
        b, _ = synth_health(scenario, None, SimConfig(seed=4), subject=2)
        assert a.volts.tobytes() == b.volts.tobytes()


# ---------------------------------------------------------------- export and wire


def test_export_dataset(tmp_path):
    cfg = SimConfig(subjects=1, trial_s=6.0)
    n = export_dataset(tmp_path, cfg, motions=[MotionLabel.LIFT_HEEL, MotionLabel.WALK_FORWARD])
    assert n == 8
    with open(tmp_path / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["file"] for r in rows[:2]] == ["S01_A1_1.csv", "S01_A1_2.csv"]
    assert all((tmp_path / r["file"]).exists() for r in rows)
    assert rows[0]["n_frames"] == "360"
    with open(tmp_path / "ground_truth.csv", newline="") as fh:
        truth = list(csv.DictReader(fh))
    assert {r["event"] for r in truth} == {"burst_start"}


def test_quantization_error_is_within_one_lsb():
    scale = AdcScale()
    session, _ = synth_session(MotionLabel.WALK_FORWARD, 1, 1, SimConfig(trial_s=10.0))
    payloads = session_to_wire(session, scale)
    volts = np.array([decode_frame(p).adc for p in payloads]) * scale.vref / scale.full_scale
    assert np.max(np.abs(volts - session.volts)) <= scale.lsb_volts
