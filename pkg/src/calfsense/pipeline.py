"""End-to-end motion recognition: sessions -> features -> classifier -> metrics.

Every stage failure is re-raised as ``StageError`` naming the stage, so the
command line can report where a run broke.
"""

from __future__ import annotations

import csv
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .core import DEFAULT_BASELINE_S, MotionLabel, NormalizedSeries, Session, estimate_baseline, normalize
from .csvio import read_csv
from .errors import CalfSenseError, StageError
from .features import featurize_batch
from .pca import fit_pca
from .svm import (
    ConfusionMatrix,
    KernelSpec,
    Metrics,
    MultiClassModel,
    Standardizer,
    TrainConfig,
    default_gamma,
    evaluate,
    split_dataset,
    train_multiclass,
)
from .windowing import WindowSpec, segment_array, sweep_grid

STAGES = ("load", "normalize", "segment", "featurize", "split", "standardize", "pca", "svm", "evaluate")


@contextmanager
def stage(name: str):
    """Wrap errors raised inside the block as ``StageError(name, cause)``."""
    try:
        yield
    except StageError:
        raise
    except (CalfSenseError, ValueError, OSError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class PipelineConfig:
    window: WindowSpec = WindowSpec(2.0, 0.5, "sliding")
    baseline_s: float = DEFAULT_BASELINE_S
    drop_baseline: bool = True  # the baseline preamble is rest, not the labelled motion
    standardize: bool = True
    variance_target: float = 0.95
    kernel: str = "rbf"
    gamma: Optional[float] = None  # None: 1 / (d * mean variance) of the PCA scores
    train: TrainConfig = TrainConfig()
    split_seed: int = 0

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear"):
            raise ValueError("kernel must be 'rbf' or 'linear'")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass
class FeatureSet:
    X: np.ndarray  # (m, 64)
    labels: List[MotionLabel]
    provenance: List[tuple]  # (subject, motion code, set, window start index)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=int)
        return FeatureSet(self.X[idx], [self.labels[i] for i in idx], [self.provenance[i] for i in idx])


def prepare_series(session: Session, cfg: PipelineConfig) -> NormalizedSeries:
    with stage("normalize"):
        series = normalize(session, estimate_baseline(session, cfg.baseline_s))
        if cfg.drop_baseline:
            rel = series.t_s - series.t_s[0]
            series = series.drop_leading(int(np.count_nonzero(rel < cfg.baseline_s - 1e-9)))
    return series


def session_features(session: Session, cfg: PipelineConfig,
                     specs: Optional[Sequence[WindowSpec]] = None) -> Dict[WindowSpec, FeatureSet]:
    """Feature matrices of one session for each window spec (default: ``cfg.window``)."""
    specs = list(specs) if specs is not None else [cfg.window]
    if session.motion is None:
        raise StageError("featurize", ValueError(f"session {session.subject_id}/{session.set_index} has no motion label"))
    series = prepare_series(session, cfg)
    out = {}
    for spec in specs:
        with stage("segment"):
            w, s = spec.samples(series.sample_rate_hz)
            windows = segment_array(series.x, w, s)
        with stage("featurize"):
            X = featurize_batch(windows)
        starts = np.arange(X.shape[0]) * s
        prov = [(session.subject_id, session.motion.value, session.set_index, int(k)) for k in starts]
        out[spec] = FeatureSet(X, [session.motion] * X.shape[0], prov)
    return out


def corpus_features(sessions: Iterable[Session], cfg: PipelineConfig,
                    specs: Optional[Sequence[WindowSpec]] = None) -> Dict[WindowSpec, FeatureSet]:
    """Stream sessions once and build one feature set per window spec."""
    specs = list(specs) if specs is not None else [cfg.window]
    parts: Dict[WindowSpec, List[FeatureSet]] = {s: [] for s in specs}
    for session in sessions:
        for spec, fs in session_features(session, cfg, specs).items():
            parts[spec].append(fs)
    out = {}
    for spec, lst in parts.items():
        if not lst:
            raise StageError("load", ValueError("no sessions"))
        out[spec] = FeatureSet(
            np.concatenate([p.X for p in lst]),
            [l for p in lst for l in p.labels],
            [q for p in lst for q in p.provenance],
        )
    return out


def fit_classifier(train: FeatureSet, cfg: PipelineConfig) -> MultiClassModel:
    """Standardize (optional) -> PCA -> one-vs-one SVM, all fitted on ``train``."""
    X = train.X
    scaler = None
    if cfg.standardize:
        with stage("standardize"):
            scaler = Standardizer.fit(X)
            X = scaler.transform(X)
    with stage("pca"):
        pca = fit_pca(X, cfg.variance_target)
        Z = (X - pca.mean) @ pca.components.T
    with stage("svm"):
        if cfg.kernel == "linear":
            kernel = KernelSpec.linear()
        else:
            kernel = KernelSpec.rbf(cfg.gamma if cfg.gamma is not None else default_gamma(Z))
        model = train_multiclass(Z, train.labels, kernel, cfg.train)
    model.scaler = scaler
    model.pca = pca
    model.meta.update(
        window=cfg.window.label().replace(" ", "_"),
        pca_k=str(pca.k),
        standardize=str(cfg.standardize).lower(),
        n_train=str(len(train)),
    )
    return model


@dataclass
class RunResult:
    model: MultiClassModel
    confusion: ConfusionMatrix
    metrics: Metrics
    n_train: int
    n_test: int
    runtime_s: float
    kkt_max: float = 0.0
    converged: bool = True


def split_features(features: FeatureSet, seed: int) -> Tuple[FeatureSet, FeatureSet]:
    with stage("split"):
        tr, te = split_dataset(features.provenance, seed)
        if tr.size == 0 or te.size == 0:
            raise ValueError("split left an empty train or test side")
    return features.subset(tr), features.subset(te)


def run_experiment(features: FeatureSet, cfg: PipelineConfig) -> RunResult:
    """Grouped split, fit on the train half, evaluate on the test half."""
    t0 = time.perf_counter()
    train, test = split_features(features, cfg.split_seed)
    model = fit_classifier(train, cfg)
    with stage("evaluate"):
        cm, metrics = evaluate(model, test.X, test.labels)
    kkt = max(m.kkt_residual for m in model.models.values())
    conv = all(m.converged for m in model.models.values())
    return RunResult(model, cm, metrics, len(train), len(test), time.perf_counter() - t0, kkt, conv)


@dataclass
class SweepRow:
    spec: WindowSpec
    macro_recall: float
    n_windows: int
    n_train: int
    n_test: int
    runtime_s: float
    standardize: bool = True
    other_scaling_recall: Optional[float] = None  # same row with standardization flipped
    best: bool = False


def sweep(sessions: Iterable[Session], cfg: PipelineConfig,
          specs: Optional[Sequence[WindowSpec]] = None, compare_scaling: bool = False) -> List[SweepRow]:
    """Macro-recall for every window setting; the best row is flagged
    (ties go to the shorter window, then to the earlier grid entry).

    With ``compare_scaling`` each row is also scored with feature
    standardization flipped, so both PCA input conventions are reported.
    """
    specs = list(specs) if specs is not None else sweep_grid()
    t0 = time.perf_counter()
    feats = corpus_features(sessions, cfg, specs)
    feat_time = (time.perf_counter() - t0) / len(specs)
    rows = []
    for spec in specs:
        run_cfg = replace(cfg, window=spec)
        res = run_experiment(feats[spec], run_cfg)
        other = None
        if compare_scaling:
            other = run_experiment(feats[spec], replace(run_cfg, standardize=not cfg.standardize)).metrics.macro_recall
        rows.append(SweepRow(spec, res.metrics.macro_recall, len(feats[spec]), res.n_train,
                             res.n_test, res.runtime_s + feat_time, cfg.standardize, other))
    flag_best(rows)
    return rows


def flag_best(rows: Sequence[SweepRow]) -> int:
    """Mark and return the index of the highest macro-recall row; ties go to
    the shorter window, then to the earlier row."""
    best = min(range(len(rows)), key=lambda i: (-rows[i].macro_recall, rows[i].spec.length_s, i))
    for i, r in enumerate(rows):
        r.best = i == best
    return best


SWEEP_HEADER = ("length_s", "mode", "overlap", "macro_recall", "n_windows", "n_train", "n_test",
                "runtime_s", "standardize", "macro_recall_other_scaling", "best")


def sweep_table(rows: Sequence[SweepRow]) -> List[list]:
    return [
        [f"{r.spec.length_s:g}", r.spec.mode, f"{r.spec.overlap_frac:g}", f"{r.macro_recall:.6f}",
         r.n_windows, r.n_train, r.n_test, f"{r.runtime_s:.3f}", str(r.standardize).lower(),
         "" if r.other_scaling_recall is None else f"{r.other_scaling_recall:.6f}", int(r.best)]
        for r in rows
    ]


# --------------------------------------------------------------------------
# dataset directories


def read_manifest(dataset_dir) -> List[dict]:
    path = os.path.join(dataset_dir, "manifest.csv")
    with stage("load"):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "file" not in rows[0]:
            raise ValueError(f"{path}: manifest has no 'file' column or no rows")
    return rows


def iter_dataset(dataset_dir, subjects: Optional[Sequence[str]] = None) -> Iterator[Session]:
    """Sessions listed in the directory's manifest, in manifest order."""
    for row in read_manifest(dataset_dir):
        if subjects is not None and row.get("subject") not in subjects:
            continue
        with stage("load"):
            rate = row.get("sample_rate_hz")
            session = read_csv(os.path.join(dataset_dir, row["file"]),
                               sample_rate_hz=float(rate) if rate else None)
        yield session
