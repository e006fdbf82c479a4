"""Fixed and sliding window segmentation of normalized series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import MotionLabel, NormalizedSeries
from .errors import SeriesTooShort

LENGTH_GRID_S = (2.0, 4.0, 6.0)
OVERLAP_GRID = (0.0, 0.25, 0.30, 0.50, 0.60)


@dataclass(frozen=True)
class WindowSpec:
    length_s: float = 2.0
    overlap_frac: float = 0.5
    mode: str = "sliding"

    def __post_init__(self):
        if self.mode not in ("fixed", "sliding"):
            raise ValueError(f"mode must be 'fixed' or 'sliding', got {self.mode!r}")
        if not self.length_s > 0:
            raise ValueError("length_s must be positive")
        if self.mode == "fixed":
            object.__setattr__(self, "overlap_frac", 0.0)
        if not 0.0 <= self.overlap_frac < 1.0:
            raise ValueError("overlap_frac must be in [0, 1)")

    @classmethod
    def fixed(cls, length_s: float) -> "WindowSpec":
        return cls(length_s, 0.0, "fixed")

    def samples(self, sample_rate_hz: float) -> Tuple[int, int]:
        """Window length and stride in samples."""
        w = int(round(self.length_s * sample_rate_hz))
        if w < 2:
            raise ValueError(f"window of {self.length_s} s at {sample_rate_hz} Hz is shorter than 2 samples")
        s = max(1, int(round(w * (1.0 - self.overlap_frac))))
        return w, s

    def label(self) -> str:
        if self.mode == "fixed":
            return f"{self.length_s:g}s fixed"
        return f"{self.length_s:g}s sliding {self.overlap_frac:.0%}"


def sweep_grid() -> List[WindowSpec]:
    """The 15 window settings searched by the sweep: 3 lengths x (fixed + 4 overlaps)."""
    specs = []
    for length in LENGTH_GRID_S:
        specs.append(WindowSpec.fixed(length))
        for ov in OVERLAP_GRID[1:]:
            specs.append(WindowSpec(length, ov, "sliding"))
    return specs


@dataclass(frozen=True, eq=False)
class Window:
    x: np.ndarray
    start_index: int
    label: Optional[MotionLabel]
    provenance: tuple  # (subject, motion, set)


def window_count(n_samples: int, w: int, s: int) -> int:
    if n_samples < w:
        return 0
    return (n_samples - w) // s + 1


def window_starts(n_samples: int, w: int, s: int) -> np.ndarray:
    return np.arange(window_count(n_samples, w, s), dtype=np.int64) * s


def segment(series: NormalizedSeries, spec: WindowSpec) -> List[Window]:
    """Cut ``series`` into windows of exactly ``w`` rows.

    Windows start at 0, s, 2s, ... while they fit; the tail remainder is
    discarded. Each window's ``x`` is a read-only view into the series.
    """
    w, s = spec.samples(series.sample_rate_hz)
    n = len(series)
    if n < w:
        raise SeriesTooShort(f"series has {n} samples, window needs {w}")
    prov = (series.subject_id, series.motion, series.set_index)
    return [
        Window(series.x[start : start + w], int(start), series.motion, prov)
        for start in window_starts(n, w, s)
    ]


def segment_array(x: np.ndarray, w: int, s: int) -> np.ndarray:
    """Strided ``(count, w, channels)`` view of ``x`` for batch feature extraction."""
    n = x.shape[0]
    if n < w:
        raise SeriesTooShort(f"series has {n} samples, window needs {w}")
    count = window_count(n, w, s)
    view = np.lib.stride_tricks.sliding_window_view(x, w, axis=0)[::s][:count]
    # sliding_window_view puts the window axis last
    return np.moveaxis(view, -1, 1)

