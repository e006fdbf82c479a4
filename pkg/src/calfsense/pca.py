"""Principal component analysis via the symmetric eigendecomposition of the sample covariance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import DimensionMismatch, ModelFormatError, NonFiniteInput, TooFewSamples

FORMAT_TAG = "calfsense-pca"
FORMAT_VERSION = 1
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows are principal axes
    eigenvalues: np.ndarray  # (k,), descending
    total_variance: float
    all_eigenvalues: np.ndarray  # full spectrum, descending

    @property
    def k(self) -> int:
        return int(self.components.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.mean.shape[0])

    @property
    def explained_fraction(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.ones_like(self.eigenvalues) / max(self.k, 1)
        return self.eigenvalues / self.total_variance


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _descending_order(eigvals: np.ndarray, eigvecs: np.ndarray) -> np.ndarray:
    order = list(np.argsort(-eigvals, kind="stable"))
    scale = max(float(np.max(np.abs(eigvals))), 1e-300)
    dominant = np.argmax(np.abs(eigvecs), axis=0)
    # equal eigenvalues: order by the column index each axis is dominated by
    out, i = [], 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(eigvals[order[i]] - eigvals[order[j]]) <= _TIE_RTOL * scale:
            j += 1
        out.extend(sorted(order[i:j], key=lambda c: dominant[c]))
        i = j
    return np.array(out, dtype=int)


def fit_pca(X, variance_target: float = 0.95) -> PcaModel:
    """Fit PCA on the rows of ``X``.

    Keeps the smallest number of components whose cumulative share of the
    total variance reaches ``variance_target``. Covariance uses the
    ``1/(m-1)`` sample convention.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {X.shape}")
    m, d = X.shape
    if m < 2:
        raise TooFewSamples(f"PCA needs at least 2 samples, got {m}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("feature matrix contains NaN or infinity")
    if not 0.0 < variance_target <= 1.0:
        raise ValueError("variance_target must be in (0, 1]")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    order = _descending_order(eigvals, eigvecs)
    eigvals = eigvals[order]
    eigvecs = _orient(eigvecs[:, order])

    total = float(np.trace(cov))
    if total > 0:
        cum = np.cumsum(eigvals) / total
        k = int(np.searchsorted(cum, variance_target * (1.0 - _TIE_RTOL))) + 1
        k = min(max(k, 1), d)
    else:
        k = 1
    return PcaModel(
        mean=mean,
        components=np.ascontiguousarray(eigvecs[:, :k].T),
        eigenvalues=eigvals[:k].copy(),
        total_variance=total,
        all_eigenvalues=eigvals,
    )


def pca_transform(model: PcaModel, x) -> np.ndarray:
    """Project one vector ``(d,)`` or a batch ``(m, d)`` onto the retained axes."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.k:
        raise DimensionMismatch(f"expected {model.k} coordinates, got {z.shape[-1]}")
    return z @ model.components + model.mean


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.ravel(values))


def write_pca(model: PcaModel, fh: TextIO) -> None:
    fh.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n")
    fh.write(f"dims {model.n_features} {model.k} {len(model.all_eigenvalues)}\n")
    fh.write(f"total_variance {model.total_variance:.17g}\n")
    fh.write(f"mean {_fmt(model.mean)}\n")
    fh.write(f"eigenvalues {_fmt(model.all_eigenvalues)}\n")
    for row in model.components:
        fh.write(f"component {_fmt(row)}\n")


def _expect(line: str, key: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != key:
        raise ModelFormatError(f"expected '{key}' line, got {line[:40]!r}")
    return parts[1:]


def read_pca(lines) -> PcaModel:
    """Parse a model written by ``write_pca`` from an iterator of lines."""
    lines = iter(lines)
    head = next(lines).split()
    if head[:1] != [FORMAT_TAG] or len(head) != 2:
        raise ModelFormatError("not a PCA model block")
    if int(head[1]) != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported PCA format version {head[1]}")
    d, k, n_all = (int(v) for v in _expect(next(lines), "dims"))
    total = float(_expect(next(lines), "total_variance")[0])
    mean = np.array(_expect(next(lines), "mean"), dtype=float)
    all_eig = np.array(_expect(next(lines), "eigenvalues"), dtype=float)
    comps = np.array([_expect(next(lines), "component") for _ in range(k)], dtype=float)
    if mean.shape != (d,) or all_eig.shape != (n_all,) or comps.shape != (k, d):
        raise ModelFormatError("PCA block dimensions do not match its header")
    return PcaModel(mean, comps.reshape(k, d), all_eig[:k].copy(), total, all_eig)
