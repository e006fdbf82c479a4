"""Run configuration: embedded defaults, a flat ``key = value`` file, then flags.

File format: one ``key = value`` per line, ``#`` starts a comment, blank
lines are ignored. Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from .health import EventParams
from .pipeline import PipelineConfig
from .simulator import ChairStandParams, GaitParams, SimConfig, TandemParams
from .svm import TrainConfig
from .windowing import WindowSpec
from .wire import AdcScale

SNAPSHOT_NAME = "run_config.txt"


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> Optional[float]:
    t = str(text).strip().lower()
    return None if t in ("", "none", "auto") else float(t)


def _span(text: str) -> Tuple[float, float]:
    a, sep, b = str(text).partition(":")
    if not sep:
        raise ValueError(f"expected START:END, got {text!r}")
    lo, hi = float(a), float(b)
    if not hi > lo:
        raise ValueError(f"empty span {text!r}")
    return lo, hi


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, tuple):
        return ":".join(f"{v:g}" for v in value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


_e, _s, _t = EventParams(), SimConfig(), TrainConfig()

# key -> (parser, default)
KEYS: Dict[str, Tuple[Callable[[str], Any], Any]] = {
    "seed": (int, 0),
    "sim.subjects": (int, _s.subjects),
    "sim.sets_per_motion": (int, _s.sets_per_motion),
    "sim.trial_s": (float, _s.trial_s),
    "sim.sample_rate_hz": (float, _s.sample_rate_hz),
    "sim.noise_sigma": (float, _s.noise_sigma),
    "sim.drift_per_s": (float, _s.drift_per_s),
    "sim.subject_scale_sigma": (float, _s.subject_scale_sigma),
    "sim.gain_jitter_sigma": (float, _s.gain_jitter_sigma),
    "sim.set_scale_sigma": (float, _s.set_scale_sigma),
    "sim.rep_amplitude_sigma": (float, _s.rep_amplitude_sigma),
    "sim.rep_jitter_s": (float, _s.rep_jitter_s),
    "sim.n_stands": (int, ChairStandParams().n_stands),
    "sim.shake_s": (_opt_float, TandemParams().shake_s),
    "sim.loss_s": (_opt_float, TandemParams().loss_s),
    "sim.gait_cycle_s": (float, GaitParams().cycle_s),
    "sim.gait_stance_duty": (float, GaitParams().stance_duty),
    "stream.rate": (float, 1.0),
    "baseline_s": (float, 2.0),
    "drop_baseline": (_bool, True),
    "window.length_s": (float, 2.0),
    "window.overlap": (float, 0.5),
    "window.mode": (str, "sliding"),
    "pca.variance_target": (float, 0.95),
    "pca.standardize": (_bool, True),
    "svm.kernel": (str, "rbf"),
    "svm.gamma": (_opt_float, None),
    "svm.c": (float, _t.c),
    "svm.tol": (float, _t.tol),
    "svm.max_passes": (int, _t.max_passes),
    "svm.max_iter": (int, _t.max_iter),
    "sweep.compare_scaling": (_bool, True),
    "event.smooth_s": (float, _e.smooth_s),
    "event.theta_factor": (float, _e.theta_factor),
    "event.release_factor": (float, _e.release_factor),
    "event.min_event_gap_s": (float, _e.min_event_gap_s),
    "event.min_prominence": (float, _e.min_prominence),
    "event.min_peak_gap_s": (float, _e.min_peak_gap_s),
    "event.loss_factor": (float, _e.loss_factor),
    "event.rolling_s": (float, _e.rolling_s),
    "event.shake_sustain_s": (float, _e.shake_sustain_s),
    "event.min_rise_factor": (float, _e.min_rise_factor),
    "event.release_fraction": (float, _e.release_fraction),
    "gait.rest": (_span, (0.0, 2.0)),
    "gait.invert": (_bool, False),
    "chairstand.window_s": (float, 30.0),
    "chairstand.start_s": (float, 2.0),
    "tandem.rest": (_span, (3.5, 7.5)),
    "ingest.listen": (str, "127.0.0.1:9750"),
    "ingest.vref": (float, 3.3),
    "ingest.adc_bits": (int, 12),
    "ingest.accept_timeout_s": (_opt_float, None),
}


def parse_config_text(lines: Iterable[str], source: str = "<config>") -> Dict[str, Any]:
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{source}:{n}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def derive_seed(root: int, stage: str) -> int:
    """Independent per-stage seed from the root seed."""
    key = sum(ord(c) << (8 * (i % 4)) for i, c in enumerate(stage))
    ss = np.random.SeedSequence(int(root), spawn_key=(key,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RunConfig:
    values: Dict[str, Any] = field(default_factory=lambda: {k: d for k, (_, d) in KEYS.items()})

    @classmethod
    def resolve(cls, file: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """Defaults, then ``file``, then ``overrides`` (string or typed values)."""
        cfg = cls()
        if file is not None:
            with open(file, encoding="utf-8") as fh:
                cfg.update(parse_config_text(fh, file), file)
        if overrides:
            cfg.update(overrides, "flags")
        cfg.validate()
        return cfg

    def update(self, items: Mapping[str, Any], source: str) -> None:
        for key, value in items.items():
            if key not in KEYS:
                raise ValueError(f"{source}: unknown configuration key {key!r}")
            parser = KEYS[key][0]
            try:
                self.values[key] = parser(value) if isinstance(value, str) else value
            except ValueError as exc:
                raise ValueError(f"{source}: bad value for {key}: {exc}") from None

    def __getitem__(self, key: str):
        return self.values[key]

    def validate(self) -> None:
        # building every component surfaces bad values before any stage runs
        self.sim_config()
        self.pipeline_config()
        self.event_params()
        self.adc_scale()

    def sim_config(self) -> SimConfig:
        v = self.values
        return SimConfig(
            subjects=v["sim.subjects"], sets_per_motion=v["sim.sets_per_motion"], trial_s=v["sim.trial_s"],
            sample_rate_hz=v["sim.sample_rate_hz"], noise_sigma=v["sim.noise_sigma"],
            drift_per_s=v["sim.drift_per_s"], subject_scale_sigma=v["sim.subject_scale_sigma"],
            gain_jitter_sigma=v["sim.gain_jitter_sigma"], set_scale_sigma=v["sim.set_scale_sigma"],
            rep_amplitude_sigma=v["sim.rep_amplitude_sigma"], rep_jitter_s=v["sim.rep_jitter_s"],
            preamble_s=v["baseline_s"], seed=v["seed"],
        )

    def window_spec(self) -> WindowSpec:
        v = self.values
        if v["window.mode"] == "fixed":
            return WindowSpec.fixed(v["window.length_s"])
        return WindowSpec(v["window.length_s"], v["window.overlap"], v["window.mode"])

    def pipeline_config(self) -> PipelineConfig:
        v = self.values
        train = TrainConfig(v["svm.c"], v["svm.tol"], v["svm.max_passes"], derive_seed(v["seed"], "svm"),
                            v["svm.max_iter"])
        return PipelineConfig(
            window=self.window_spec(), baseline_s=v["baseline_s"], drop_baseline=v["drop_baseline"],
            standardize=v["pca.standardize"], variance_target=v["pca.variance_target"],
            kernel=v["svm.kernel"], gamma=v["svm.gamma"], train=train,
            split_seed=derive_seed(v["seed"], "split"),
        )

    def event_params(self) -> EventParams:
        return EventParams(**{k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("event.")})

    def adc_scale(self) -> AdcScale:
        return AdcScale.from_bits(self.values["ingest.adc_bits"], self.values["ingest.vref"])

    def lines(self) -> list:
        return [f"{k} = {_fmt(self.values[k])}" for k in sorted(self.values)]

    def write_snapshot(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, SNAPSHOT_NAME)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.lines()) + "\n")
        return path
