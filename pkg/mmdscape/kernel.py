# mmdscape/kernel.py
from __future__ import annotations
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.spatial.distance import cdist

from .models import Sample
from .validation import InvalidArgumentError, InsufficientSampleError

@dataclass(frozen=True)
class KernelConfig:
    """Gaussian RBF kernel k(x, y) = exp(-||x - y||^2 / (2 bandwidth)); bandwidth is sigma^2."""
    bandwidth: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise InvalidArgumentError(f"bandwidth must be > 0, got {self.bandwidth}.")
        object.__setattr__(self, 'bandwidth', float(self.bandwidth))

def rbf(x: np.ndarray, y: np.ndarray, cfg: KernelConfig) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"Dimension mismatch: {x.shape} vs {y.shape}.")
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * cfg.bandwidth)))

def gram_matrix(x_points: np.ndarray, y_points: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Kernel matrix K[i, j] = k(x_i, y_j)."""
    return np.exp(-cdist(x_points, y_points, 'sqeuclidean') / (2.0 * cfg.bandwidth))

def gram_sums(x: Sample, y: Sample, cfg: KernelConfig) -> tuple[float, float, float]:
    """
    The three kernel sums of the finite-sample MMD before normalization:
    sum_{i != j} k(x_i, x_j), sum_{i != j} k(y_i, y_j) and sum_{i, j} k(x_i, y_j).
    """
    if x.count < 2 or y.count < 2:
        raise InsufficientSampleError(f"Need at least 2 points per sample, got {x.count} and {y.count}.")
    if x.dim != y.dim:
        raise InvalidArgumentError(f"Dimension mismatch: {x.dim} vs {y.dim}.")
    k_xx = gram_matrix(x.points, x.points, cfg)
    k_yy = gram_matrix(y.points, y.points, cfg)
    np.fill_diagonal(k_xx, 0.0)
    np.fill_diagonal(k_yy, 0.0)
    k_xy = gram_matrix(x.points, y.points, cfg)
    return float(k_xx.sum()), float(k_yy.sum()), float(k_xy.sum())

def gaussian_rbf_integrals(
    means: np.ndarray, sigma_cov: np.ndarray, cfg: KernelConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """
    E_{Z ~ N(mu, Sigma)} exp(-||Z||^2 / (2 sigma^2)) for every row mu of `means`.

    Returns (values, solved) where solved[i] = (Sigma + sigma^2 I)^{-1} mu_i, so
    the gradient of values[i] w.r.t. mu_i is -values[i] * solved[i].
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(sigma_cov, dtype=np.float64))
    d = means.shape[1]
    if cov.shape != (d, d):
        raise InvalidArgumentError(f"Shape mismatch: means {means.shape}, sigma_cov {cov.shape}.")
    try:
        # Sigma / sigma^2 + I is PD for any PSD Sigma
        factor = cho_factor(cov + cfg.bandwidth * np.eye(d), lower=True)
    except LinAlgError as e:
        raise InvalidArgumentError("sigma_cov must be positive-semidefinite.") from e
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0]))) - d * np.log(cfg.bandwidth)
    solved = cho_solve(factor, means.T).T
    quad = np.sum(means * solved, axis=1)
    return np.exp(-0.5 * log_det - 0.5 * quad), solved

def gaussian_rbf_integral(mu: np.ndarray, sigma_cov: np.ndarray, cfg: KernelConfig) -> float:
    """
    E_{Z ~ N(mu, Sigma)} exp(-||Z||^2 / (2 sigma^2))
        = |Sigma / sigma^2 + I|^{-1/2} exp(-1/2 mu^T (Sigma + sigma^2 I)^{-1} mu).

    Sigma may be singular.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    values, _ = gaussian_rbf_integrals(mu[None, :], sigma_cov, cfg)
    return float(values[0])

def rank_one_rbf_integral(
    v: np.ndarray, a: np.ndarray, alpha: float, beta: float, cfg: KernelConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Gaussian-RBF integral for the covariance alpha a a^T + beta I, in O(d).

    Each row of `v` is a mean. Returns (values, gradients w.r.t. a), with shapes
    (k,) and (k, d). Determinant and inverse come from the matrix-determinant
    lemma and Sherman-Morrison, so alpha a a^T + beta I may be singular.
    """
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    if v.shape[1] != a.size:
        raise InvalidArgumentError(f"Dimension mismatch: {v.shape[1]} vs {a.size}.")
    d = a.size
    gamma = beta + cfg.bandwidth
    p = a @ a
    denom = gamma + alpha * p
    t = v @ a
    log_values = (
        0.5 * d * np.log(cfg.bandwidth / gamma)
        - 0.5 * np.log1p(alpha * p / gamma)
        - np.sum(v * v, axis=1) / (2.0 * gamma)
        + alpha * t ** 2 / (2.0 * gamma * denom)
    )
    values = np.exp(log_values)
    grad_log = (
        -alpha * a / denom
        + alpha * t[:, None] * v / (gamma * denom)
        - (alpha ** 2 * t ** 2 / (gamma * denom ** 2))[:, None] * a
    )
    return values, values[:, None] * grad_log
