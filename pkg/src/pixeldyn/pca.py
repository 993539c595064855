"""Principal component analysis via SVD of the centered data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # d x k, orthonormal columns
    variances: np.ndarray  # k, non-increasing; squared singular values / N

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def fit_pca(data: np.ndarray, k: int) -> PcaModel:
    """Fit the top-``k`` principal subspace of ``data`` (one sample per row).

    Each basis column is sign-fixed so that its largest-magnitude entry is
    positive, which makes the fit reproducible bit for bit.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be an N x d matrix")
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, {min(n - 1, d)}]")
    mean = data.mean(axis=0)
    _, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    basis = vt[:k].T.copy()
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs
    variances = s[:k] ** 2 / n
    return PcaModel(mean=mean, basis=basis, variances=variances)


def project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Coefficients ``basis.T (x - mean)``; rows of a batch are projected independently."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"expected {model.dim} features, got {x.shape[-1]}")
    return (x - model.mean) @ model.basis


def reconstruct(model: PcaModel, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != model.k:
        raise ValueError(f"expected {model.k} coefficients, got {c.shape[-1]}")
    return model.mean + c @ model.basis.T


def reconstruction_mse(model: PcaModel, data: np.ndarray) -> float:
    data = np.asarray(data, dtype=np.float64)
    resid = data - reconstruct(model, project(model, data))
    return float(np.mean(resid ** 2))
