import numpy as np
import pytest
from hypothesis import given, strategies as st

from calfsense.core import N_CHANNELS, MotionLabel, NormalizedSeries
from calfsense.errors import SeriesTooShort
from calfsense.windowing import (
    LENGTH_GRID_S,
    OVERLAP_GRID,
    WindowSpec,
    segment,
    segment_array,
    sweep_grid,
    window_count,
    window_starts,
)
from oracles import enumerate_windows


def series(n, rate=60.0):
    x = np.arange(n * N_CHANNELS, dtype=float).reshape(n, N_CHANNELS)
    return NormalizedSeries(x, rate, subject_id="S02", motion=MotionLabel.LIFT_HEEL, set_index=3)


def test_reference_scale_counts():
    assert len(segment(series(5400), WindowSpec.fixed(2.0))) == 45
    assert len(segment(series(5400), WindowSpec(2.0, 0.5))) == 89


@pytest.mark.parametrize("overlap", OVERLAP_GRID)
def test_series_of_one_window_length(overlap):
    assert len(segment(series(120), WindowSpec(2.0, overlap))) == 1


def test_too_short():
    with pytest.raises(SeriesTooShort):
        segment(series(119), WindowSpec(2.0, 0.5))


def test_spec_invariants():
    assert WindowSpec(4.0, 0.6, "fixed").overlap_frac == 0.0
    for bad in [(0.0, 0.5, "sliding"), (2.0, 1.0, "sliding"), (2.0, -0.1, "sliding"), (2.0, 0.5, "other")]:
        with pytest.raises(ValueError):
            WindowSpec(*bad)
    with pytest.raises(ValueError):
        WindowSpec(0.01).samples(60.0)  # under two samples
    assert WindowSpec(2.0, 0.3).samples(60.0) == (120, 84)
    assert WindowSpec(6.0, 0.6).samples(60.0) == (360, 144)


def test_sweep_grid_shape():
    grid = sweep_grid()
    assert len(grid) == 15
    assert {g.length_s for g in grid} == set(LENGTH_GRID_S)
    fixed = [g for g in grid if g.mode == "fixed"]
    assert len(fixed) == 3 and all(g.overlap_frac == 0.0 for g in fixed)


@given(st.integers(1, 2000), st.sampled_from([60, 120, 240, 360]), st.sampled_from(OVERLAP_GRID))
def test_closed_form_matches_enumeration(length, w, overlap):
    s = max(1, int(round(w * (1 - overlap))))
    expected = enumerate_windows(length, w, overlap)
    assert window_count(length, w, s) == len(expected)
    assert window_starts(length, w, s).tolist() == expected


@given(st.integers(120, 1500), st.sampled_from(sweep_grid()[:5]))
def test_windows_have_fixed_size_and_stride(n, spec):
    s_series = series(n)
    wins = segment(s_series, spec)
    w, s = spec.samples(60.0)
    starts = [win.start_index for win in wins]
    assert all(win.x.shape == (w, N_CHANNELS) for win in wins)
    assert all(b - a == s for a, b in zip(starts, starts[1:]))
    for win in wins:
        assert np.array_equal(win.x, s_series.x[win.start_index : win.start_index + w])
        assert win.label is MotionLabel.LIFT_HEEL
        assert win.provenance == ("S02", MotionLabel.LIFT_HEEL, 3)


@given(st.integers(120, 1500))
def test_fixed_windows_tile_the_prefix(n):
    wins = segment(series(n), WindowSpec.fixed(2.0))
    covered = np.zeros(n, dtype=int)
    for win in wins:
        covered[win.start_index : win.start_index + 120] += 1
    assert np.all(covered[: len(wins) * 120] == 1)
    assert np.all(covered[len(wins) * 120 :] == 0)


def test_segment_array_matches_segment():
    s_series = series(700)
    spec = WindowSpec(4.0, 0.25)
    w, s = spec.samples(60.0)
    stack = segment_array(s_series.x, w, s)
    wins = segment(s_series, spec)
    assert stack.shape == (len(wins), w, N_CHANNELS)
    for a, win in zip(stack, wins):
        assert np.array_equal(a, win.x)
