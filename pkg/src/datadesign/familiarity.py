"""Familiarity scoring: PCA projection + variational GMM over activations.

A sample's familiarity is the log-likelihood of its (projected)
penultimate-layer activations under a mixture fitted to the training set's
activations. High scores mean densely populated regions of feature space;
the low tail holds noisy or rare samples worth human review.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ModelError
from .pca import PcaModel, fit_pca, project
from .vbgmm import VbGmmConfig, VbGmmModel, fit_vbgmm, log_likelihood_rows

DEFAULT_PROJECTION_DIM = 50


@dataclass(frozen=True)
class ActivationMatrix:
    """N rows of M activation values keyed to sample ids."""

    ids: tuple[str, ...]
    data: np.ndarray  # (N, M) float64
    layer_tag: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ModelError("bad-shape", f"activations must be 2D, got shape {data.shape}")
        if len(self.ids) != data.shape[0]:
            raise ModelError("id-mismatch", f"{len(self.ids)} ids for {data.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise ModelError("duplicate-id", "activation ids must be unique")
        if not np.all(np.isfinite(data)):
            raise ModelError("non-finite", "activations contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FamiliarityModel:
    pca: PcaModel
    gmm: VbGmmModel
    n: int
    m: int
    d: int
    layer_tag: str = ""
    fitted_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )


@dataclass(frozen=True)
class FamiliarityScores:
    entries: tuple[tuple[str, float], ...]  # (sample id, log-likelihood)

    def __post_init__(self):
        if any(not math.isfinite(s) for _, s in self.entries):
            raise ModelError("non-finite", "scores must be finite")

    @property
    def n(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


def default_projection_dim(n: int, m: int) -> int:
    return min(DEFAULT_PROJECTION_DIM, m, n - 1)


def fit_familiarity(
    acts: ActivationMatrix,
    gmm_config: VbGmmConfig | None = None,
    d: int | None = None,
) -> FamiliarityModel:
    """PCA-project the activations, then fit the variational mixture."""
    if d is None:
        d = default_projection_dim(acts.n, acts.m)
    pca = fit_pca(acts.data, d)
    projected = project(pca, acts.data)
    gmm = fit_vbgmm(projected, gmm_config)
    return FamiliarityModel(pca=pca, gmm=gmm, n=acts.n, m=acts.m, d=d, layer_tag=acts.layer_tag)


def score_all(model: FamiliarityModel, acts: ActivationMatrix) -> FamiliarityScores:
    """One log-likelihood score per row; on the training matrix this is
    self-familiarity."""
    projected = project(model.pca, acts.data)
    scores = log_likelihood_rows(model.gmm, projected)
    return FamiliarityScores(entries=tuple(zip(acts.ids, (float(s) for s in scores))))


def tail(scores: FamiliarityScores, fraction: float, side: str = "least") -> list[str]:
    """Ids from the requested extreme, most extreme first.

    k = max(1, floor(fraction * N)); ties break by id lexicographic order.
    """
    if scores.n == 0:
        raise ModelError("empty-scores", "no scores to select from")
    if not (0 < fraction <= 1):
        raise ModelError("bad-fraction", f"fraction must be in (0, 1], got {fraction}")
    if side not in ("least", "most"):
        raise ModelError("bad-side", f"side must be least or most, got {side!r}")
    k = max(1, math.floor(fraction * scores.n))
    if side == "least":
        ranked = sorted(scores.entries, key=lambda e: (e[1], e[0]))
    else:
        ranked = sorted(scores.entries, key=lambda e: (-e[1], e[0]))
    return [sid for sid, _ in ranked[:k]]
