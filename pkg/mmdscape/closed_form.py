# mmdscape/closed_form.py
"""
Population MMD between a model and the truth, with gradients and Hessians,
for the mean, rank-one covariance and symmetric mixture families.

Each function returns an ``MmdEval``; the Hessian is only formed when
``hessian=True``.
"""
from __future__ import annotations
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernel import KernelConfig
from .models import MeanModel, LowRankCovModel, SymGmmModel
from .validation import InvalidArgumentError, InvalidModelError

ORTHOGONAL_TO_A_STAR: str = 'orthogonal-to-a*'
ORTHOGONAL_TO_MU_STAR: str = 'orthogonal-to-mu*'
SADDLE_CHECK_TOL: float = 1e-8
# Case-(B) mixture saddles: mu^T W mu = mu*^T W mu* / 3 with W = (2 Sigma + sigma^2 I)^{-1}.
GMM_SADDLE_NORM_RATIO: float = 1.0 / 3.0

@dataclass(frozen=True, eq=False)
class MmdEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None

@dataclass(frozen=True)
class SaddleDescription:
    exists: bool
    radius_sq: float | None
    constraint: str

def _checked_point(theta: np.ndarray, dim: int) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (dim,):
        raise InvalidArgumentError(f"Expected a parameter of length {dim}, got shape {theta.shape}.")
    return theta

def _kernel_metric(sigma_cov: np.ndarray, cfg: KernelConfig) -> tuple[tuple[np.ndarray, bool], float]:
    """Cholesky factor of 2 Sigma + sigma^2 I and log sigma^{2d} / |2 Sigma + sigma^2 I|."""
    d = sigma_cov.shape[0]
    factor = cho_factor(2.0 * sigma_cov + cfg.bandwidth * np.eye(d), lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return factor, d * np.log(cfg.bandwidth) - log_det

# ===================================================================
# GAUSSIAN WITH UNKNOWN MEAN
# ===================================================================

def mmd_mean(model_star: MeanModel, mu: np.ndarray, cfg: KernelConfig, hessian: bool = False) -> MmdEval:
    """
    2 / sqrt|2 Sigma / sigma^2 + I| * (1 - exp(-1/2 delta^T (2 Sigma + sigma^2 I)^{-1} delta)),
    delta = mu - mu*. Quasi-convex with a single stationary point at mu*.
    """
    mu = _checked_point(mu, model_star.dim)
    factor, log_pref = _kernel_metric(model_star.sigma_cov, cfg)
    kappa = np.exp(0.5 * log_pref)
    delta = mu - model_star.mu
    w_delta = cho_solve(factor, delta)
    half_quad = 0.5 * (delta @ w_delta)
    decay = np.exp(-half_quad)
    value = -2.0 * kappa * np.expm1(-half_quad)
    gradient = 2.0 * kappa * decay * w_delta
    hess = None
    if hessian:
        w = cho_solve(factor, np.eye(model_star.dim))
        hess = 2.0 * kappa * decay * (w - np.outer(w_delta, w_delta))
        hess = 0.5 * (hess + hess.T)
    return MmdEval(value=float(value), gradient=gradient, hessian=hess)

# ===================================================================
# GAUSSIAN WITH UNKNOWN RANK-ONE COVARIANCE
# ===================================================================

def mmd_cov(model_star: LowRankCovModel, a: np.ndarray, cfg: KernelConfig, hessian: bool = False) -> MmdEval:
    """
    Three determinant terms, each reduced to scalars with c = 2 eps^2 + sigma^2:

        |(2aa^T + 2eps^2 I)/sigma^2 + I|       = (c/sigma^2)^d (1 + 2|a|^2/c)
        |(aa^T + a*a*^T + 2eps^2 I)/sigma^2 + I| = (c/sigma^2)^d ((1 + |a|^2/c)(1 + |a*|^2/c) - (a.a*)^2/c^2)
    """
    a = _checked_point(a, model_star.dim)
    a_star = model_star.a
    d = a.size
    c = 2.0 * model_star.epsilon ** 2 + cfg.bandwidth
    kappa = (cfg.bandwidth / c) ** (0.5 * d)
    p, s, q = a @ a, a_star @ a_star, a @ a_star
    u = 1.0 + 2.0 * p / c
    u_star = 1.0 + 2.0 * s / c
    det_cross = (1.0 + p / c) * (1.0 + s / c) - q * q / (c * c)

    value = kappa * (u ** -0.5 + u_star ** -0.5 - 2.0 * det_cross ** -0.5)
    # grad of det_cross
    v = (2.0 / c) * (1.0 + s / c) * a - (2.0 * q / (c * c)) * a_star
    gradient = kappa * (-(2.0 / c) * u ** -1.5 * a + det_cross ** -1.5 * v)

    hess = None
    if hessian:
        eye = np.eye(d)
        h_self = -(2.0 / c) * u ** -1.5 * eye + (12.0 / (c * c)) * u ** -2.5 * np.outer(a, a)
        h_cross = (
            det_cross ** -1.5 * ((2.0 / c) * (1.0 + s / c) * eye - (2.0 / (c * c)) * np.outer(a_star, a_star))
            - 1.5 * det_cross ** -2.5 * np.outer(v, v)
        )
        hess = kappa * (h_self + h_cross)
        hess = 0.5 * (hess + hess.T)
    return MmdEval(value=float(value), gradient=gradient, hessian=hess)

def cov_orthogonal_saddle(model_star: LowRankCovModel, cfg: KernelConfig) -> SaddleDescription:
    """
    Radius of the saddle ring {a : a^T a* = 0}. With c = 2 eps^2 + sigma^2 and
    s = |a*|^2 it exists iff c > s / 7, and then

        |a|^2 = c ((s + c)^{1/3} - c^{1/3}) / (2 c^{1/3} - (s + c)^{1/3}).
    """
    s = float(model_star.a @ model_star.a)
    if s <= 0.0:
        raise InvalidModelError("The saddle ring is undefined for a* = 0.")
    c = 2.0 * model_star.epsilon ** 2 + cfg.bandwidth
    # 7c > s, with slack for c = s/7 computed in floating point
    if 7.0 * c <= s * (1.0 + 1e-12):
        return SaddleDescription(exists=False, radius_sq=None, constraint=ORTHOGONAL_TO_A_STAR)
    cbrt_c = np.cbrt(c)
    cbrt_sc = np.cbrt(s + c)
    radius_sq = c * (cbrt_sc - cbrt_c) / (2.0 * cbrt_c - cbrt_sc)
    return SaddleDescription(exists=True, radius_sq=float(radius_sq), constraint=ORTHOGONAL_TO_A_STAR)

# ===================================================================
# SYMMETRIC TWO-COMPONENT MIXTURE WITH UNKNOWN MEAN
# ===================================================================

def mmd_gmm(model_star: SymGmmModel, mu: np.ndarray, cfg: KernelConfig, hessian: bool = False) -> MmdEval:
    """
    1/2 sigma^d / sqrt|2 Sigma + sigma^2 I| * [E(2mu) + 1 + E(2mu*) + 1 - 2E(mu - mu*) - 2E(mu + mu*)]
    with E(v) = exp(-1/2 v^T (2 Sigma + sigma^2 I)^{-1} v).
    """
    mu = _checked_point(mu, model_star.dim)
    mu_star = model_star.mu
    factor, log_pref = _kernel_metric(model_star.sigma_cov, cfg)
    pref = np.exp(0.5 * log_pref)

    def decay(vector: np.ndarray) -> tuple[float, np.ndarray]:
        w_vector = cho_solve(factor, vector)
        return float(np.exp(-0.5 * (vector @ w_vector))), w_vector

    e_self, w_self = decay(2.0 * mu)
    e_star, _ = decay(2.0 * mu_star)
    e_minus, w_minus = decay(mu - mu_star)
    e_plus, w_plus = decay(mu + mu_star)

    value = 0.5 * pref * ((e_self + 1.0 + e_star + 1.0) - 2.0 * e_minus - 2.0 * e_plus)
    # w_self = W (2 mu), so W mu = w_self / 2
    gradient = pref * (-e_self * w_self + e_minus * w_minus + e_plus * w_plus)

    hess = None
    if hessian:
        w = cho_solve(factor, np.eye(model_star.dim))
        hess = pref * (
            -2.0 * e_self * (w - np.outer(w_self, w_self))
            + e_minus * (w - np.outer(w_minus, w_minus))
            + e_plus * (w - np.outer(w_plus, w_plus))
        )
        hess = 0.5 * (hess + hess.T)
    return MmdEval(value=float(value), gradient=gradient, hessian=hess)

def _gmm_metric(model_star: SymGmmModel, cfg: KernelConfig) -> np.ndarray:
    return np.linalg.inv(2.0 * model_star.sigma_cov + cfg.bandwidth * np.eye(model_star.dim))

def gmm_saddle_check(
    model_star: SymGmmModel, mu: np.ndarray, cfg: KernelConfig, tol: float = SADDLE_CHECK_TOL,
) -> bool:
    """
    True iff mu is a case-(B) stationary point: W-orthogonal to mu* and with
    mu^T W mu = mu*^T W mu* / 3, where W = (2 Sigma + sigma^2 I)^{-1}.
    """
    mu = _checked_point(mu, model_star.dim)
    w = _gmm_metric(model_star, cfg)
    mu_star = model_star.mu
    cross = mu @ w @ mu_star
    norm_sq = mu @ w @ mu
    star_sq = mu_star @ w @ mu_star
    if norm_sq <= 0.0 or star_sq <= 0.0:
        return False
    orthogonal = abs(cross) <= tol * np.sqrt(norm_sq * star_sq)
    on_sphere = abs(norm_sq - GMM_SADDLE_NORM_RATIO * star_sq) <= tol * star_sq
    return bool(orthogonal and on_sphere)

def gmm_case_b_point(model_star: SymGmmModel, direction: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Projects `direction` onto the case-(B) saddle set (W-orthogonalize, then rescale)."""
    direction = _checked_point(direction, model_star.dim)
    w = _gmm_metric(model_star, cfg)
    mu_star = model_star.mu
    star_sq = mu_star @ w @ mu_star
    orth = direction - (direction @ w @ mu_star) / star_sq * mu_star
    orth_sq = orth @ w @ orth
    if orth_sq <= 1e-24 * star_sq:
        raise InvalidArgumentError("direction is parallel to mu*; no case-(B) point along it.")
    return orth * np.sqrt(GMM_SADDLE_NORM_RATIO * star_sq / orth_sq)

# ===================================================================
# OBJECTIVE HANDLE
# ===================================================================

class ClosedFormObjective:
    """Pure objective handle over the closed forms: theta -> (value, gradient)."""

    def __init__(self, model_star: MeanModel | LowRankCovModel | SymGmmModel, cfg: KernelConfig) -> None:
        match model_star:
            case MeanModel():
                self._func = mmd_mean
            case LowRankCovModel():
                self._func = mmd_cov
            case SymGmmModel():
                self._func = mmd_gmm
            case _:
                raise InvalidArgumentError(f"No closed form for {type(model_star).__name__}.")
        self.model_star = model_star
        self.cfg = cfg

    def evaluate(self, theta: np.ndarray, hessian: bool = False) -> MmdEval:
        return self._func(self.model_star, theta, self.cfg, hessian=hessian)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        result = self.evaluate(theta)
        return result.value, result.gradient

    @property
    def dim(self) -> int:
        return self.model_star.dim
