"""Time-domain window features: mean, RMS, population std and signal energy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import N_CHANNELS, MotionLabel
from .errors import EmptyWindow
from .windowing import Window

FEATURES_PER_CHANNEL = 4
N_FEATURES = N_CHANNELS * FEATURES_PER_CHANNEL


def _as_1d(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise EmptyWindow("feature of an empty sequence")
    return a


def feat_mean(x: Sequence[float]) -> float:
    return float(np.mean(_as_1d(x)))


def feat_rms(x: Sequence[float]) -> float:
    a = _as_1d(x)
    return float(np.sqrt(np.mean(a * a)))


def feat_std(x: Sequence[float]) -> float:
    """Population standard deviation (divisor N)."""
    a = _as_1d(x)
    return float(np.sqrt(np.mean((a - a.mean()) ** 2)))


def feat_energy(x: Sequence[float]) -> float:
    """Mean of squared samples, i.e. RMS squared."""
    a = _as_1d(x)
    return float(np.mean(np.abs(a * a)))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    label: Optional[MotionLabel]
    provenance: tuple  # (subject, motion, set, window start)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have {N_FEATURES} values")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def featurize_batch(windows: np.ndarray) -> np.ndarray:
    """Features for a stack of windows shaped ``(count, n, 16)``.

    Returns ``(count, 64)`` ordered ch01.mean, ch01.rms, ch01.std,
    ch01.energy, ch02.mean, ...
    """
    x = np.asarray(windows, dtype=float)
    if x.ndim != 3 or x.shape[2] != N_CHANNELS:
        raise ValueError(f"expected (count, n, {N_CHANNELS}) windows, got {x.shape}")
    if x.shape[1] == 0:
        raise EmptyWindow("windows have no samples")
    mean = x.mean(axis=1)
    energy = np.abs(x * x).mean(axis=1)
    rms = np.sqrt(energy)
    std = np.sqrt(((x - mean[:, None, :]) ** 2).mean(axis=1))
    return np.stack([mean, rms, std, energy], axis=-1).reshape(x.shape[0], N_FEATURES)


def featurize(window: Window) -> FeatureVector:
    values = featurize_batch(window.x[None, :, :])[0]
    return FeatureVector(values, window.label, tuple(window.provenance) + (window.start_index,))


def feature_slots(channel: int) -> slice:
    """Slice of the 64-vector holding the four features of 0-based ``channel``."""
    return slice(channel * FEATURES_PER_CHANNEL, (channel + 1) * FEATURES_PER_CHANNEL)
