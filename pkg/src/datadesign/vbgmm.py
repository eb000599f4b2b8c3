"""Variational Bayesian Gaussian mixture with full covariances.

Coordinate-ascent variational inference for a Dirichlet-weight mixture of
Gaussians with Gaussian-Wishart component priors. The component budget is
deliberately overprovisioned: the variational updates shrink unused
components, and anything whose expected weight falls below PRUNE_WEIGHT is
dropped from the plug-in parameters.

Initialization is seeded k-means++ so fits are deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import digamma, gammaln, logsumexp

from .errors import ModelError

PRUNE_WEIGHT = 1e-4


@dataclass(frozen=True)
class VbGmmConfig:
    K_max: int = 32
    weight_concentration_prior: float | None = None  # default 1 / K_max**2
    convergence_tol: float = 1e-3
    max_iter: int = 500
    regularization_floor: float = 1e-6
    seed: int = 0


@dataclass
class VbGmmModel:
    """Fitted variational state plus plug-in mixture parameters.

    The variational state keeps every budgeted component; the plug-in
    parameters (weights / means / covariances) keep only components whose
    expected weight survived pruning, renormalized to sum to 1.
    """

    config: VbGmmConfig
    d: int
    # variational state over all K_max components
    alpha: np.ndarray  # Dirichlet concentrations (K,)
    beta: np.ndarray  # mean-precision scale (K,)
    m: np.ndarray  # mean locations (K, d)
    nu: np.ndarray  # Wishart degrees of freedom (K,)
    scale_inv: np.ndarray  # inverse Wishart scale matrices (K, d, d)
    # plug-in parameters after pruning
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    means: np.ndarray = field(default=None)  # type: ignore[assignment]
    covariances: np.ndarray = field(default=None)  # type: ignore[assignment]
    elbo_trace: list[float] = field(default_factory=list)
    converged: bool = False
    seed: int = 0
    _chol: np.ndarray | None = None  # cached Cholesky factors of covariances

    @property
    def n_effective(self) -> int:
        return len(self.weights)

    def component_cholesky(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.covariances)
        return self._chol


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 10) -> np.ndarray:
    """Seeded k-means++ centers plus a few Lloyd refinement passes.

    Returns hard assignment labels for each point.
    """
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dist2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        # winsorized D^2 sampling: isolated extreme points must not dominate
        # the seeding distribution
        capped = np.minimum(dist2, np.quantile(dist2, 0.90))
        total = capped.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
            continue
        centers[j] = points[rng.choice(n, p=capped / total)]
        dist2 = np.minimum(dist2, np.sum((points - centers[j]) ** 2, axis=1))
    labels = None
    for _ in range(n_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return labels


def _log_dirichlet_norm(alpha: np.ndarray) -> float:
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum())


def _log_wishart_norm(nu: np.ndarray, log_det_prec_chol: np.ndarray, d: int) -> np.ndarray:
    i = np.arange(d)[:, None]
    return -(
        nu * log_det_prec_chol
        + nu * d * 0.5 * np.log(2.0)
        + gammaln(0.5 * (nu[None, :] - i)).sum(axis=0)
    )


def fit_vbgmm(points: np.ndarray, config: VbGmmConfig | None = None) -> VbGmmModel:
    """Fit by alternating responsibility and variational-parameter updates.

    Stops when the evidence lower bound changes by less than
    `convergence_tol` or `max_iter` is reached. Deterministic for a fixed
    seed.
    """
    config = config or VbGmmConfig()
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if config.max_iter < 1:
        raise ModelError("bad-config", "max_iter must be >= 1")
    if config.K_max < 1:
        raise ModelError("bad-config", "K_max must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite", "input contains NaN or Inf")
    if n <= d:
        raise ModelError("too-few-rows", f"need more rows ({n}) than dimensions ({d})")

    k = config.K_max
    reg = config.regularization_floor
    # weakly-informative priors: small weight concentration so unused
    # components empty out; mean prior at the data mean; scale prior from the
    # data covariance
    alpha0 = config.weight_concentration_prior
    if alpha0 is None:
        alpha0 = 1.0 / (k * k)
    beta0 = 1.0
    m0 = x.mean(axis=0)
    nu0 = float(d)
    psi0 = np.atleast_2d(np.cov(x, rowvar=False))
    psi0 = psi0 + reg * np.eye(d)

    rng = np.random.default_rng(config.seed)
    labels = _kmeans_pp(x, k, rng)
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0

    alpha = beta = m = nu = scale_inv = None
    elbo_trace: list[float] = []
    converged = False

    def m_step(resp):
        nonlocal alpha, beta, m, nu, scale_inv
        nk = resp.sum(axis=0) + 10 * np.finfo(np.float64).eps
        xk = (resp.T @ x) / nk[:, None]
        alpha = alpha0 + nk
        beta = beta0 + nk
        m = (beta0 * m0 + nk[:, None] * xk) / beta[:, None]
        nu = nu0 + nk
        scale_inv = np.empty((k, d, d))
        for j in range(k):
            diff = x - xk[j]
            sk = (resp[:, j][:, None] * diff).T @ diff
            dm = xk[j] - m0
            scale_inv[j] = psi0 + sk + (beta0 * nk[j] / beta[j]) * np.outer(dm, dm)
            scale_inv[j][np.diag_indices(d)] += reg

    def e_step():
        # expectations under the current variational posterior
        e_log_pi = digamma(alpha) - digamma(alpha.sum())
        log_det_si = np.empty(k)
        mah = np.empty((n, k))
        for j in range(k):
            chol = np.linalg.cholesky(scale_inv[j])
            log_det_si[j] = 2.0 * np.log(np.diag(chol)).sum()
            y = solve_triangular(chol, (x - m[j]).T, lower=True)
            mah[:, j] = (y ** 2).sum(axis=0)
        i = np.arange(d)[:, None]
        e_log_det = digamma(0.5 * (nu[None, :] + 1 - (i + 1))).sum(axis=0) + d * np.log(2.0) - log_det_si
        log_rho = (
            e_log_pi[None, :]
            + 0.5 * e_log_det[None, :]
            - 0.5 * d * np.log(2.0 * np.pi)
            - 0.5 * (d / beta)[None, :]
            - 0.5 * nu[None, :] * mah
        )
        log_norm = logsumexp(log_rho, axis=1)
        log_resp = log_rho - log_norm[:, None]
        return log_resp, log_det_si

    def lower_bound(log_resp):
        # ELBO up to additive constants; differences between iterations are
        # exact. Uses the post-M-step variational parameters.
        log_det_si = np.array(
            [2.0 * np.log(np.diag(np.linalg.cholesky(scale_inv[j]))).sum() for j in range(k)]
        )
        log_det_scale_chol = -0.5 * log_det_si  # log det chol(W), W = scale_inv^-1
        log_wishart = _log_wishart_norm(nu, log_det_scale_chol, d).sum()
        resp = np.exp(log_resp)
        entropy = -np.sum(resp * np.where(resp > 0, log_resp, 0.0))
        return float(entropy - log_wishart - _log_dirichlet_norm(alpha) - 0.5 * d * np.log(beta).sum())

    m_step(resp)
    prev = -np.inf
    for _ in range(config.max_iter):
        log_resp, _ = e_step()
        m_step(np.exp(log_resp))
        lb = lower_bound(log_resp)
        elbo_trace.append(lb)
        if abs(lb - prev) < config.convergence_tol:
            converged = True
            break
        prev = lb

    weights_all = alpha / alpha.sum()
    nk = alpha - alpha0
    # prune negligible-weight components, plus low-support ones whose full
    # covariance is unidentifiable: a handful of points plus one extreme row
    # can otherwise form a stretched satellite component that masks the
    # extreme row with an inflated density
    support_floor = max(d + 1.0, min(5.0 * d, 0.02 * n))
    keep = (weights_all >= PRUNE_WEIGHT) & (nk >= support_floor)
    if not keep.any():
        keep = weights_all == weights_all.max()
    weights = weights_all[keep]
    weights = weights / weights.sum()
    covs = scale_inv[keep] / nu[keep, None, None]
    covs[:, np.diag_indices(d)[0], np.diag_indices(d)[1]] += reg

    return VbGmmModel(
        config=config,
        d=d,
        alpha=alpha,
        beta=beta,
        m=m,
        nu=nu,
        scale_inv=scale_inv,
        weights=weights,
        means=m[keep].copy(),
        covariances=covs,
        elbo_trace=elbo_trace,
        converged=converged,
        seed=config.seed,
    )


def log_likelihood_rows(model: VbGmmModel, points: np.ndarray) -> np.ndarray:
    """Mixture log-density of each row under the plug-in parameters.

    log sum_k w_k N(x; mu_k, Sigma_k), evaluated with log-sum-exp.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.d:
        raise ModelError("dimension-mismatch", f"points have {x.shape[1]} dims, model has {model.d}")
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite", "points contain NaN or Inf")
    n = x.shape[0]
    kk = model.n_effective
    d = model.d
    log_probs = np.empty((n, kk))
    chols = model.component_cholesky()
    for j in range(kk):
        chol = chols[j]
        y = solve_triangular(chol, (x - model.means[j]).T, lower=True)
        mah = (y ** 2).sum(axis=0)
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        log_probs[:, j] = (
            np.log(model.weights[j]) - 0.5 * (d * np.log(2.0 * np.pi) + log_det + mah)
        )
    return logsumexp(log_probs, axis=1)


def log_likelihood(model: VbGmmModel, point: np.ndarray) -> float:
    """Log-density of a single point; see log_likelihood_rows."""
    point = np.asarray(point, dtype=np.float64)
    if point.ndim == 0:
        point = point[None]
    if point.ndim != 1 or point.shape[0] != model.d:
        raise ModelError("dimension-mismatch", f"expected a length-{model.d} vector")
    return float(log_likelihood_rows(model, point[None, :])[0])
