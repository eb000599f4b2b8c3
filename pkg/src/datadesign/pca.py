"""PCA via SVD, with a deterministic sign convention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (M,)
    components: np.ndarray  # (d, M), rows orthonormal
    explained_variance: np.ndarray  # (d,), non-increasing
    d: int


def fit_pca(data: np.ndarray, d: int) -> PcaModel:
    """Top-d principal directions of the centered data.

    Deterministic up to sign, fixed by making the largest-magnitude entry of
    each component positive.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ModelError("bad-shape", f"expected 2D data, got shape {data.shape}")
    n, m = data.shape
    if n < 2:
        raise ModelError("too-few-rows", f"PCA needs at least 2 rows, got {n}")
    if not (1 <= d <= min(n - 1, m)):
        raise ModelError("bad-dimension", f"d={d} out of range [1, {min(n - 1, m)}]")
    if not np.all(np.isfinite(data)):
        raise ModelError("non-finite", "data contains NaN or Inf")
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variances = (s ** 2) / (n - 1)
    if variances[0] <= 0:
        raise ModelError("zero-variance", "data has zero variance (all rows identical)")
    components = vt[:d].copy()
    # sign convention: largest-magnitude entry of each component is positive
    for i in range(d):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(mean=mean, components=components, explained_variance=variances[:d].copy(), d=d)


def project(pca: PcaModel, data: np.ndarray) -> np.ndarray:
    """Center and project rows onto the principal directions: (x - mean) C^T."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[1] != pca.mean.shape[0]:
        raise ModelError(
            "dimension-mismatch",
            f"data has {data.shape[1]} columns, model expects {pca.mean.shape[0]}",
        )
    return (data - pca.mean) @ pca.components.T
