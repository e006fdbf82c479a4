"""Soft-margin SVM trained by sequential minimal optimization, one-vs-one
multi-class voting, grouped train/test splitting and recall metrics."""

from __future__ import annotations

import logging
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .core import MotionLabel
from .errors import (
    ClassTooSmall,
    DimensionMismatch,
    MissingSetsWarning,
    ModelFormatError,
    NonFiniteInput,
    SingleClassInput,
    UnknownLabel,
)
from .pca import PcaModel, pca_transform, read_pca, write_pca

log = logging.getLogger(__name__)

MODEL_TAG = "calfsense-model"
MODEL_VERSION = 1

# minimum |delta alpha| accepted by the random-partner sweeps (classic simplified SMO)
_MIN_STEP = 1e-5
# curvature floor for pairs with non-positive eta
_TAU = 1e-12


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: Optional[float] = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or not math.isfinite(self.gamma) or self.gamma <= 0:
                raise ValueError("rbf kernel needs a finite positive gamma")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear", None)

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls("rbf", float(gamma))


def kernel_eval(k: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"kernel arguments differ in shape: {u.shape} vs {v.shape}")
    if k.kind == "linear":
        return float(u @ v)
    d = u - v
    return float(np.exp(-k.gamma * (d @ d)))


def kernel_matrix(k: KernelSpec, A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"kernel arguments differ in width: {A.shape[1]} vs {B.shape[1]}")
    G = A @ B.T
    if k.kind == "linear":
        return G
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * G
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-k.gamma * d2)


def default_gamma(X) -> float:
    """1 / (d * mean per-feature variance) of the training matrix."""
    X = np.asarray(X, dtype=float)
    var = float(X.var(axis=0).mean())
    if not var > 0:
        return 1.0
    return 1.0 / (X.shape[1] * var)


class _KernelRows:
    """Lazily computed, LRU-cached rows of the training kernel matrix."""

    def __init__(self, X: np.ndarray, kernel: KernelSpec, max_bytes: int = 256 << 20):
        self.X = X
        self.kernel = kernel
        self.sq = (X * X).sum(1)
        self.capacity = max(8, max_bytes // max(1, 8 * X.shape[0]))
        self.cache: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self.diag = self.sq.copy() if kernel.kind == "linear" else np.ones(X.shape[0])

    def row(self, i: int) -> np.ndarray:
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        g = self.X @ self.X[i]
        if self.kernel.kind == "rbf":
            d2 = self.sq + self.sq[i] - 2.0 * g
            np.maximum(d2, 0.0, out=d2)
            r = np.exp(-self.kernel.gamma * d2)
            r[i] = 1.0
        else:
            r = g
        self.cache[i] = r
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return r


# --------------------------------------------------------------------------
# binary SVM


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10
    seed: int = 0
    max_iter: int = 200_000

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class BinaryModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    sv_labels: np.ndarray
    bias: float
    kernel: KernelSpec
    c: float = 1.0
    sv_indices: Optional[np.ndarray] = None  # positions in the training matrix
    kkt_residual: float = 0.0
    n_iter: int = 0
    converged: bool = True

    @property
    def dual_coef(self) -> np.ndarray:
        return self.alphas * self.sv_labels

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatch(
                f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}"
            )
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, 1, -1)


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D training matrix, got shape {X.shape}")
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("labels and training matrix disagree in length")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("training matrix contains NaN or infinity")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("binary labels must be -1 or +1")
    if y.size == 0 or np.all(y == y[0]):
        raise SingleClassInput("binary training needs both classes present")
    return X, y.astype(float)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # row order must not influence the seeded optimizer
    keys = [y] + [X[:, c] for c in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


class _Smo:
    """Working state of one SMO run.

    ``F[i] = sum_k alpha_k y_k K(x_k, x_i) - y_i`` is the error without the
    bias, so the KKT conditions of point i read ``y_i (F[i] + b)`` against
    ``+-tol`` depending on whether ``alpha_i`` is at a bound.
    """

    def __init__(self, X, y, kernel, cfg):
        self.X, self.y, self.cfg = X, y, cfg
        self.C = float(cfg.c)
        self.rows = _KernelRows(X, kernel)
        self.alpha = np.zeros(X.shape[0])
        self.F = -y.copy()
        self.b = 0.0
        self.steps = 0

    def step(self, i: int, j: int, min_step: float) -> bool:
        if i == j:
            return False
        C, a, y = self.C, self.alpha, self.y
        ai, aj, yi, yj = a[i], a[j], y[i], y[j]
        if yi != yj:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L <= 0.0:
            return False
        Ki, Kj = self.rows.row(i), self.rows.row(j)
        kii, kjj, kij = Ki[i], Kj[j], Ki[j]
        eta = kii + kjj - 2.0 * kij
        if eta <= 0.0:
            eta = _TAU
        Ei, Ej = self.F[i] + self.b, self.F[j] + self.b
        aj_new = min(max(aj + yj * (Ei - Ej) / eta, L), H)
        if abs(aj_new - aj) <= min_step:
            return False
        ai_new = ai + yi * yj * (aj - aj_new)
        ai_new = min(max(ai_new, 0.0), C)
        # snap rounding residue onto the box so bound membership stays exact
        eps = 1e-12 * C
        if aj_new < eps:
            aj_new = 0.0
        elif aj_new > C - eps:
            aj_new = C
        if ai_new < eps:
            ai_new = 0.0
        elif ai_new > C - eps:
            ai_new = C
        dai, daj = ai_new - ai, aj_new - aj
        a[i], a[j] = ai_new, aj_new
        self.F += (dai * yi) * Ki + (daj * yj) * Kj
        b1 = self.b - Ei - yi * dai * kii - yj * daj * kij
        b2 = self.b - Ej - yi * dai * kij - yj * daj * kjj
        if 0.0 < ai_new < C:
            self.b = b1
        elif 0.0 < aj_new < C:
            self.b = b2
        else:
            self.b = 0.5 * (b1 + b2)
        self.steps += 1
        return True

    def violators(self) -> np.ndarray:
        r = self.y * (self.F + self.b)
        tol, C, a = self.cfg.tol, self.C, self.alpha
        return np.flatnonzero(((r < -tol) & (a < C)) | ((r > tol) & (a > 0.0)))

    def sweeps(self, rng: np.random.Generator) -> None:
        """Simplified SMO: random partner per violating point, until
        ``max_passes`` consecutive sweeps change nothing."""
        cfg, y, a, C = self.cfg, self.y, self.alpha, self.C
        m = self.X.shape[0]
        passes = 0
        while passes < cfg.max_passes and self.steps < cfg.max_iter:
            cand = self.violators()
            partners = rng.integers(0, m - 1, size=cand.size)
            changed = 0
            for i, j in zip(cand.tolist(), partners.tolist()):
                ri = y[i] * (self.F[i] + self.b)
                if not ((ri < -cfg.tol and a[i] < C) or (ri > cfg.tol and a[i] > 0.0)):
                    continue
                if j >= i:
                    j += 1
                if self.step(i, j, _MIN_STEP):
                    changed += 1
                    continue
                # random partner made no progress: take the one maximising |E_i - E_j|
                j = int(np.argmax(np.abs(self.F - self.F[i])))
                if self.step(i, j, _MIN_STEP):
                    changed += 1
            passes = passes + 1 if changed == 0 else 0

    def _working_sets(self):
        y, a, C = self.y, self.alpha, self.C
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0.0))
        low = ((y < 0) & (a < C)) | ((y > 0) & (a > 0.0))
        return up, low

    def gap(self) -> Tuple[float, int, int]:
        up, low = self._working_sets()
        if not up.any() or not low.any():
            return 0.0, -1, -1
        iu = np.flatnonzero(up)
        il = np.flatnonzero(low)
        i = int(iu[np.argmin(self.F[iu])])
        j = int(il[np.argmax(self.F[il])])
        return float(self.F[j] - self.F[i]), i, j

    def polish(self) -> bool:
        """Maximal-violating-pair steps until the KKT gap is within ``2 tol``."""
        while True:
            g, i, j = self.gap()
            if g <= 2.0 * self.cfg.tol:
                return True
            if self.steps >= self.cfg.max_iter or not self.step(i, j, 0.0):
                return False

    def refresh(self) -> None:
        """Recompute F from scratch to shed accumulated rounding."""
        sv = np.flatnonzero(self.alpha > 0.0)
        coef = self.alpha[sv] * self.y[sv]
        if sv.size:
            K = kernel_matrix(self.rows.kernel, self.X, self.X[sv])
            self.F = K @ coef - self.y
        else:
            self.F = -self.y.copy()

    def final_bias(self) -> Tuple[float, float]:
        """Bias at the centre of the feasible interval, and the KKT residual it leaves."""
        up, low = self._working_sets()
        lo_bound = -np.min(self.F[up]) if up.any() else None  # b >= lo_bound - tol
        hi_bound = -np.max(self.F[low]) if low.any() else None  # b <= hi_bound + tol
        if lo_bound is None and hi_bound is None:
            return self.b, 0.0
        if lo_bound is None:
            return float(hi_bound), 0.0
        if hi_bound is None:
            return float(lo_bound), 0.0
        b = 0.5 * (lo_bound + hi_bound)
        return float(b), float(max(0.0, 0.5 * (lo_bound - hi_bound)))


def train_binary(X, y, kernel: KernelSpec, cfg: TrainConfig = TrainConfig()) -> BinaryModel:
    """Solve the soft-margin dual with SMO.

    Sweeps follow the simplified scheme (seeded random second index). Once
    they go quiet, maximal-violating-pair steps finish the job so every
    training point meets its KKT condition within ``cfg.tol``.

    Raises:
        SingleClassInput: ``y`` holds only one class.
        NonFiniteInput: ``X`` contains NaN or infinity.
    """
    X, y = _check_xy(X, y)
    order = _canonical_order(X, y)
    Xo, yo = np.ascontiguousarray(X[order]), y[order]
    smo = _Smo(Xo, yo, kernel, cfg)
    smo.sweeps(np.random.default_rng(int(cfg.seed)))
    converged = smo.polish()
    for _ in range(3):
        smo.refresh()
        if smo.gap()[0] <= 2.0 * cfg.tol:
            converged = True
            break
        converged = smo.polish()
    bias, residual = smo.final_bias()
    if not converged or residual > cfg.tol:
        log.warning("SMO stopped after %d steps with KKT residual %.3g", smo.steps, residual)
    sv = np.flatnonzero(smo.alpha > 0.0)
    return BinaryModel(
        support_vectors=Xo[sv].copy(),
        alphas=smo.alpha[sv].copy(),
        sv_labels=yo[sv].astype(int),
        bias=bias,
        kernel=kernel,
        c=float(cfg.c),
        sv_indices=order[sv],
        kkt_residual=residual,
        n_iter=smo.steps,
        converged=bool(converged and residual <= cfg.tol),
    )


def kkt_violations(alphas, y, decision, c: float) -> np.ndarray:
    """Per-point KKT violation of a trained dual solution (0 where satisfied)."""
    a = np.asarray(alphas, dtype=float)
    r = np.asarray(y, dtype=float) * np.asarray(decision, dtype=float) - 1.0
    v = np.zeros_like(r)
    at_zero = a <= 0.0
    at_c = a >= c
    free = ~at_zero & ~at_c
    v[at_zero] = np.maximum(0.0, -r[at_zero])
    v[at_c] = np.maximum(0.0, r[at_c])
    v[free] = np.abs(r[free])
    return v


# --------------------------------------------------------------------------
# preprocessing and one-vs-one


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        std[std <= 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0)))] = 1.0
        return cls(X.mean(axis=0), std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def _label_key(label):
    if isinstance(label, MotionLabel):
        return (0, label.index, "")
    return (1, 0, str(label))


def _pair_seed(seed: int, a: int, b: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(a, b))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(eq=False)
class MultiClassModel:
    classes: tuple
    models: Dict[Tuple[int, int], BinaryModel]  # (a, b) with a < b; +1 means classes[a]
    kernel: KernelSpec
    config: TrainConfig
    scaler: Optional[Standardizer] = None
    pca: Optional[PcaModel] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def preprocess(self, X) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(X, dtype=float))
        if self.scaler is not None:
            Z = self.scaler.transform(Z)
        if self.pca is not None:
            Z = pca_transform(self.pca, Z)
        return Z

    def pairwise_decisions(self, X) -> Dict[Tuple[int, int], np.ndarray]:
        Z = self.preprocess(X)
        return {pair: m.decision_function(Z) for pair, m in self.models.items()}

    def predict_index(self, X, decisions=None) -> np.ndarray:
        """Majority vote; ties go to the larger summed |decision| of the winning
        pairwise votes, then to the earlier class."""
        if decisions is None:
            decisions = self.pairwise_decisions(X)
        n = next(iter(decisions.values())).shape[0]
        K = len(self.classes)
        votes = np.zeros((n, K))
        strength = np.zeros((n, K))
        rows = np.arange(n)
        for (a, b), f in decisions.items():
            winner = np.where(f >= 0.0, a, b)
            votes[rows, winner] += 1
            strength[rows, winner] += np.abs(f)
        top = votes == votes.max(axis=1, keepdims=True)
        score = np.where(top, strength, -np.inf)
        return np.argmax(score, axis=1)

    def predict(self, X) -> list:
        return [self.classes[i] for i in self.predict_index(X)]


def train_multiclass(features, labels: Sequence[Hashable], kernel: KernelSpec,
                     cfg: TrainConfig = TrainConfig()) -> MultiClassModel:
    """One-vs-one ensemble: one binary SVM per unordered class pair.

    Each pair gets its own seed derived from ``cfg.seed`` and the pair's class
    indices, so results do not depend on training order or scheduling.
    """
    X = np.asarray(features, dtype=float)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionMismatch("features and labels disagree in length")
    classes = tuple(sorted(set(labels), key=_label_key))
    if len(classes) < 2:
        raise SingleClassInput(f"need at least 2 classes, got {len(classes)}")
    index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([index[l] for l in labels])
    counts = np.bincount(y_idx, minlength=len(classes))
    for c, n in zip(classes, counts):
        if n < 2:
            raise ClassTooSmall(c, int(n))
    models = {}
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            sel = (y_idx == a) | (y_idx == b)
            yy = np.where(y_idx[sel] == a, 1, -1)
            pair_cfg = replace(cfg, seed=_pair_seed(cfg.seed, a, b))
            models[(a, b)] = train_binary(X[sel], yy, kernel, pair_cfg)
    return MultiClassModel(classes, models, kernel, cfg)


# --------------------------------------------------------------------------
# split and metrics


def split_dataset(provenance: Sequence[tuple], seed: int = 0,
                  train_sets_per_group: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """Grouped 50/50 split by recording set.

    ``provenance[i]`` starts with ``(subject, motion, set)``. Within every
    (subject, motion) group whole sets go to one side: two of four sets train,
    two test, chosen by a generator seeded from ``seed``. Groups with other
    set counts fall back to ``ceil(n/2)`` training sets and emit
    ``MissingSetsWarning``.

    Returns:
        (train_indices, test_indices) into ``provenance``.
    """
    prov = [tuple(p[:3]) for p in provenance]
    groups: Dict[tuple, set] = {}
    for subj, motion, st in prov:
        groups.setdefault((str(subj), str(motion)), set()).add(int(st))
    rng = np.random.default_rng(int(seed))
    train_sets = {}
    for key in sorted(groups):
        sets = sorted(groups[key])
        if len(sets) != 2 * train_sets_per_group:
            warnings.warn(
                f"{key[0]}/{key[1]} has {len(sets)} set(s), expected {2 * train_sets_per_group}; "
                "splitting available sets in half",
                MissingSetsWarning,
                stacklevel=2,
            )
            n_train = math.ceil(len(sets) / 2)
        else:
            n_train = train_sets_per_group
        chosen = rng.permutation(len(sets))[:n_train]
        train_sets[key] = {sets[i] for i in chosen}
    is_train = np.array(
        [int(st) in train_sets[(str(subj), str(motion))] for subj, motion, st in prov], dtype=bool
    )
    return np.flatnonzero(is_train), np.flatnonzero(~is_train)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows = true class, columns = predicted

    def to_rows(self) -> List[list]:
        names = [str(c) for c in self.classes]
        return [[names[i]] + [int(v) for v in row] for i, row in enumerate(self.counts)]

    def header(self) -> List[str]:
        return ["true\\pred"] + [str(c) for c in self.classes]


@dataclass(frozen=True, eq=False)
class Metrics:
    classes: tuple  # classes with at least one test sample
    recall_per_class: np.ndarray
    macro_recall: float

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def as_dict(self) -> dict:
        out = {"macro_recall": self.macro_recall, "n_classes": self.n_classes}
        for c, r in zip(self.classes, self.recall_per_class):
            out[f"recall_{c}"] = float(r)
        return out


def confusion_from_labels(y_true: Sequence, y_pred: Sequence, classes: Sequence) -> ConfusionMatrix:
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index:
            raise UnknownLabel(f"label {t} is not one of the model's classes")
        if p not in index:
            raise UnknownLabel(f"prediction {p} is not one of the model's classes")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(tuple(classes), counts)


def metrics_from_confusion(cm: ConfusionMatrix) -> Metrics:
    """recall_i = TP_i / (TP_i + FN_i); macro-recall is their unweighted mean
    over the classes that have test samples."""
    support = cm.counts.sum(axis=1)
    present = np.flatnonzero(support > 0)
    tp = np.diag(cm.counts)[present]
    recalls = tp / support[present]
    macro = float(np.mean(recalls)) if recalls.size else float("nan")
    return Metrics(tuple(cm.classes[i] for i in present), recalls, macro)


def evaluate(model: MultiClassModel, features, labels: Sequence) -> Tuple[ConfusionMatrix, Metrics]:
    labels = list(labels)
    if not labels:
        raise ValueError("empty test set")
    known = set(model.classes)
    for l in labels:
        if l not in known:
            raise UnknownLabel(f"label {l} is not one of the model's classes")
    pred = model.predict(features)
    cm = confusion_from_labels(labels, pred, model.classes)
    return cm, metrics_from_confusion(cm)


# --------------------------------------------------------------------------
# persistence


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.ravel(values))


def _parse_label(text: str):
    try:
        return MotionLabel.parse(text)
    except ValueError:
        return text


def save_model(model: MultiClassModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MODEL_TAG} {MODEL_VERSION}\n")
        for key in sorted(model.meta):
            fh.write(f"meta {key} {model.meta[key]}\n")
        fh.write("classes " + " ".join(str(c) for c in model.classes) + "\n")
        gamma = model.kernel.gamma if model.kernel.kind == "rbf" else 0.0
        fh.write(f"kernel {model.kernel.kind} {gamma:.17g}\n")
        cfg = model.config
        fh.write(f"train {cfg.c:.17g} {cfg.tol:.17g} {cfg.max_passes} {cfg.seed} {cfg.max_iter}\n")
        if model.scaler is not None:
            fh.write(f"scaler_mean {_fmt(model.scaler.mean)}\n")
            fh.write(f"scaler_scale {_fmt(model.scaler.scale)}\n")
        if model.pca is not None:
            write_pca(model.pca, fh)
        for (a, b), m in sorted(model.models.items()):
            d = m.support_vectors.shape[1]
            fh.write(f"pair {a} {b} {len(m.alphas)} {d} {m.bias:.17g} {m.kkt_residual:.17g}\n")
            for alpha, lab, sv in zip(m.alphas, m.sv_labels, m.support_vectors):
                fh.write(f"sv {alpha:.17g} {int(lab)} {_fmt(sv)}\n")
        fh.write("end\n")


def load_model(path) -> MultiClassModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    it = iter(lines)
    head = next(it, "").split()
    if head[:1] != [MODEL_TAG] or len(head) != 2:
        raise ModelFormatError(f"{path}: not a {MODEL_TAG} file")
    if int(head[1]) != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {head[1]}")
    meta, classes, kernel, cfg = {}, None, None, None
    scaler_mean = scaler_scale = None
    pca = None
    models = {}
    pending = list(it)
    pos = 0
    while pos < len(pending):
        line = pending[pos]
        key, _, rest = line.partition(" ")
        pos += 1
        if key == "meta":
            k, _, v = rest.partition(" ")
            meta[k] = v
        elif key == "classes":
            classes = tuple(_parse_label(t) for t in rest.split())
        elif key == "kernel":
            kind, gamma = rest.split()
            kernel = KernelSpec.linear() if kind == "linear" else KernelSpec.rbf(float(gamma))
        elif key == "train":
            c, tol, mp, seed, mi = rest.split()
            cfg = TrainConfig(float(c), float(tol), int(mp), int(seed), int(mi))
        elif key == "scaler_mean":
            scaler_mean = np.array(rest.split(), dtype=float)
        elif key == "scaler_scale":
            scaler_scale = np.array(rest.split(), dtype=float)
        elif key == "calfsense-pca":
            block = [line]
            while pos < len(pending) and pending[pos].split()[0] in (
                "dims", "total_variance", "mean", "eigenvalues", "component"
            ):
                block.append(pending[pos])
                pos += 1
            pca = read_pca(block)
        elif key == "pair":
            a, b, n_sv, d, bias, resid = rest.split()
            n_sv, d = int(n_sv), int(d)
            rows = [pending[pos + r].split() for r in range(n_sv)]
            pos += n_sv
            if any(r[0] != "sv" or len(r) != 3 + d for r in rows):
                raise ModelFormatError(f"{path}: malformed support vector block for pair {a},{b}")
            arr = np.array([r[1:] for r in rows], dtype=float).reshape(n_sv, 2 + d)
            models[(int(a), int(b))] = BinaryModel(
                support_vectors=arr[:, 2:],
                alphas=arr[:, 0],
                sv_labels=arr[:, 1].astype(int),
                bias=float(bias),
                kernel=kernel,
                c=cfg.c if cfg else 1.0,
                kkt_residual=float(resid),
            )
        elif key == "end":
            break
        else:
            raise ModelFormatError(f"{path}: unexpected line {line[:40]!r}")
    if classes is None or kernel is None or cfg is None:
        raise ModelFormatError(f"{path}: missing classes, kernel or train line")
    scaler = Standardizer(scaler_mean, scaler_scale) if scaler_mean is not None else None
    return MultiClassModel(classes, models, kernel, cfg, scaler, pca, meta)
