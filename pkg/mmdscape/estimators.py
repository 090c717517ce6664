# mmdscape/estimators.py
"""
Finite-sample objectives: the unbiased MMD between two samples, the one-sided
MMD (model side in closed form) and the negative log-likelihood baselines.

Gradients are w.r.t. the model parameter returned by ``models.parameter_of``.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .kernel import KernelConfig, gram_matrix, gram_sums, gaussian_rbf_integrals, rank_one_rbf_integral
from .models import (
    LowRankCovModel, MeanModel, ParametricModel, ReparamNoise, Sample, SymGmmCovModel, SymGmmModel,
    UnmixingModel, derive_rng, draw_noise, parameter_of, push_forward, with_parameter,
)
from .validation import InsufficientSampleError, InvalidArgumentError, LikelihoodUndefinedError, UnsupportedError

logger = logging.getLogger(__name__)

# Substream tag of the per-epoch fake samples: SeedSequence([seed, FAKE_STREAM, epoch]).
FAKE_STREAM: int = 1

LOG_2PI: float = float(np.log(2.0 * np.pi))

@dataclass(frozen=True, eq=False)
class EstimatorEval:
    value: float
    gradient: np.ndarray

def _check_pair(x_count: int, y: Sample, dim: int) -> None:
    if x_count < 2 or y.count < 2:
        raise InsufficientSampleError(f"Need at least 2 points per sample, got {x_count} and {y.count}.")
    if y.dim != dim:
        raise InvalidArgumentError(f"Dimension mismatch: model has d={dim}, data has d={y.dim}.")

def yy_term(y: Sample, cfg: KernelConfig) -> float:
    """(1 / (m (m - 1))) sum_{i != j} k(y_i, y_j); the data-only part of every MMD estimate."""
    if y.count < 2:
        raise InsufficientSampleError(f"Need at least 2 data points, got {y.count}.")
    k_yy = gram_matrix(y.points, y.points, cfg)
    np.fill_diagonal(k_yy, 0.0)
    m = y.count
    return float(k_yy.sum()) / (m * (m - 1))

# ===================================================================
# FINITE-SAMPLE MMD
# ===================================================================

def empirical_mmd(x: Sample, y: Sample, cfg: KernelConfig) -> float:
    """Unbiased U-statistic; not clamped, so it can be negative."""
    sum_xx, sum_yy, sum_xy = gram_sums(x, y, cfg)
    n, m = x.count, y.count
    return sum_xx / (n * (n - 1)) + sum_yy / (m * (m - 1)) - 2.0 * sum_xy / (n * m)

def _point_gradients(x_points: np.ndarray, y_points: np.ndarray, cfg: KernelConfig) -> tuple[float, np.ndarray]:
    """
    Model-dependent part of the U-statistic and its gradient w.r.t. every
    fake point x_i, shape (n, d).
    """
    n, m = x_points.shape[0], y_points.shape[0]
    k_xx = gram_matrix(x_points, x_points, cfg)
    np.fill_diagonal(k_xx, 0.0)
    k_xy = gram_matrix(x_points, y_points, cfg)
    value = k_xx.sum() / (n * (n - 1)) - 2.0 * k_xy.sum() / (n * m)
    pull_xx = k_xx.sum(axis=1)[:, None] * x_points - k_xx @ x_points
    pull_xy = k_xy.sum(axis=1)[:, None] * x_points - k_xy @ y_points
    grads = (
        -2.0 / (n * (n - 1) * cfg.bandwidth) * pull_xx
        + 2.0 / (n * m * cfg.bandwidth) * pull_xy
    )
    return float(value), grads

def _pull_back(model: ParametricModel, noise: ReparamNoise, point_grads: np.ndarray) -> np.ndarray:
    """Chain rule through x = g_theta(noise) with the noise held fixed."""
    match model:
        case MeanModel():
            return point_grads.sum(axis=0)
        case LowRankCovModel() | SymGmmCovModel():
            return point_grads.T @ noise.z
        case SymGmmModel():
            return point_grads.T @ noise.signs
        case UnmixingModel():
            return (point_grads.T @ noise.b).ravel()
    raise InvalidArgumentError(f"Unknown model type {type(model).__name__}.")

def empirical_mmd_eval(
    model: ParametricModel, noise: ReparamNoise, y: Sample, cfg: KernelConfig, yy: float | None = None,
) -> EstimatorEval:
    """
    Empirical MMD between the fakes g_theta(noise) and y, with the
    reparameterized gradient w.r.t. theta. Pass a precomputed `yy` to skip the
    O(m^2) data term.
    """
    _check_pair(noise.count, y, model.dim)
    x_points = push_forward(model, noise)
    value, point_grads = _point_gradients(x_points, y.points, cfg)
    if yy is None:
        yy = yy_term(y, cfg)
    return EstimatorEval(value=value + yy, gradient=_pull_back(model, noise, point_grads))

# ===================================================================
# ONE-SIDED MMD
# ===================================================================

def _osmmd_model_terms(model: ParametricModel, y_points: np.ndarray, cfg: KernelConfig) -> tuple[float, np.ndarray]:
    """E[k(X, X')] - (2/m) sum_j E[k(X, y_j)] and its gradient."""
    m = y_points.shape[0]
    match model:
        case MeanModel():
            self_val, _ = gaussian_rbf_integrals(np.zeros((1, model.dim)), 2.0 * model.sigma_cov, cfg)
            cross, solved = gaussian_rbf_integrals(model.mu - y_points, model.sigma_cov, cfg)
            value = self_val[0] - 2.0 / m * cross.sum()
            gradient = 2.0 / m * (cross @ solved)
        case SymGmmModel():
            # X - X' is N(0, 2 Sigma) for equal signs and N(+-2 mu, 2 Sigma) otherwise
            self_val, self_solved = gaussian_rbf_integrals(
                np.vstack([np.zeros(model.dim), 2.0 * model.mu]), 2.0 * model.sigma_cov, cfg,
            )
            cross_plus, solved_plus = gaussian_rbf_integrals(model.mu - y_points, model.sigma_cov, cfg)
            cross_minus, solved_minus = gaussian_rbf_integrals(-model.mu - y_points, model.sigma_cov, cfg)
            value = 0.5 * self_val.sum() - (cross_plus.sum() + cross_minus.sum()) / m
            gradient = (
                -self_val[1] * self_solved[1]
                + (cross_plus @ solved_plus - cross_minus @ solved_minus) / m
            )
        case LowRankCovModel():
            eps2 = model.epsilon ** 2
            self_val, self_grad = rank_one_rbf_integral(np.zeros((1, model.dim)), model.a, 2.0, 2.0 * eps2, cfg)
            cross, cross_grad = rank_one_rbf_integral(-y_points, model.a, 1.0, eps2, cfg)
            value = self_val[0] - 2.0 / m * cross.sum()
            gradient = self_grad[0] - 2.0 / m * cross_grad.sum(axis=0)
        case SymGmmCovModel():
            eps2 = model.epsilon ** 2
            self_val, self_grad = rank_one_rbf_integral(
                np.vstack([np.zeros(model.dim), 2.0 * model.mu]), model.a, 2.0, 2.0 * eps2, cfg,
            )
            shifted = np.vstack([model.mu - y_points, -model.mu - y_points])
            cross, cross_grad = rank_one_rbf_integral(shifted, model.a, 1.0, eps2, cfg)
            value = 0.5 * self_val.sum() - cross.sum() / m
            gradient = 0.5 * self_grad.sum(axis=0) - cross_grad.sum(axis=0) / m
        case _:
            raise UnsupportedError(f"No one-sided MMD for {type(model).__name__}.")
    return float(value), np.asarray(gradient, dtype=np.float64)

def osmmd(model: ParametricModel, y: Sample, cfg: KernelConfig, yy: float | None = None) -> EstimatorEval:
    """
    One-sided MMD: the model-side sums of the U-statistic replaced by their
    expectations. The data term is included so the value tracks the population MMD.
    """
    if isinstance(model, UnmixingModel):
        raise UnsupportedError("The one-sided MMD has no closed form for the unmixing model.")
    _check_pair(2, y, model.dim)
    value, gradient = _osmmd_model_terms(model, y.points, cfg)
    if yy is None:
        yy = yy_term(y, cfg)
    return EstimatorEval(value=value + yy, gradient=gradient)

# ===================================================================
# NEGATIVE LOG-LIKELIHOOD
# ===================================================================

def _rank_one_logpdf(residuals: np.ndarray, a: np.ndarray, eps2: float) -> tuple[np.ndarray, np.ndarray]:
    """
    log N(r; 0, a a^T + eps^2 I) per row of `residuals` and its gradient w.r.t. a,
    through the determinant lemma and Sherman-Morrison.
    """
    d = a.size
    p = a @ a
    denom = eps2 + p
    t = residuals @ a
    quad = (np.sum(residuals * residuals, axis=1) - t ** 2 / denom) / eps2
    log_det = d * np.log(eps2) + np.log1p(p / eps2)
    logpdf = -0.5 * d * LOG_2PI - 0.5 * log_det - 0.5 * quad
    grads = (
        -a / denom
        + (t[:, None] * residuals / denom - (t ** 2)[:, None] * a / denom ** 2) / eps2
    )
    return logpdf, grads

def _mixture_nll(component_logpdf: np.ndarray, component_grads: np.ndarray) -> tuple[float, np.ndarray]:
    """
    -mean log(1/2 p_+ + 1/2 p_-) from per-component log densities (2, m) and
    their parameter gradients (2, m, k), via responsibilities.
    """
    log_mix = logsumexp(component_logpdf, axis=0) + np.log(0.5)
    resp = np.exp(component_logpdf + np.log(0.5) - log_mix)
    gradient = -np.einsum('cm,cmk->k', resp, component_grads) / component_logpdf.shape[1]
    return float(-log_mix.mean()), gradient

def nll(model: ParametricModel, y: Sample) -> EstimatorEval:
    """Mean negative log-density of y under the model."""
    if y.count < 1:
        raise InsufficientSampleError("Need at least 1 data point.")
    if y.dim != model.dim:
        raise InvalidArgumentError(f"Dimension mismatch: model has d={model.dim}, data has d={y.dim}.")
    d = model.dim
    match model:
        case MeanModel():
            chol = model.chol
            log_det = 2.0 * np.sum(np.log(np.diag(chol)))
            y_bar = y.points.mean(axis=0)
            whitened = solve_triangular(chol, (y.points - model.mu).T, lower=True)
            value = 0.5 * (d * LOG_2PI + log_det) + 0.5 * np.mean(np.sum(whitened ** 2, axis=0))
            gradient = -cho_solve((chol, True), y_bar - model.mu)
            return EstimatorEval(value=float(value), gradient=gradient)
        case SymGmmModel():
            chol = model.chol
            log_det = 2.0 * np.sum(np.log(np.diag(chol)))
            logpdf, grads = [], []
            for sign in (1.0, -1.0):
                residuals = y.points - sign * model.mu
                whitened = solve_triangular(chol, residuals.T, lower=True)
                logpdf.append(-0.5 * (d * LOG_2PI + log_det) - 0.5 * np.sum(whitened ** 2, axis=0))
                # d/dmu log N(y; s mu, Sigma) = s Sigma^{-1} (y - s mu)
                grads.append(sign * cho_solve((chol, True), residuals.T).T)
            value, gradient = _mixture_nll(np.array(logpdf), np.array(grads))
            return EstimatorEval(value=value, gradient=gradient)
        case LowRankCovModel():
            if model.epsilon == 0.0:
                raise LikelihoodUndefinedError("a a^T + eps^2 I is singular at eps = 0; the likelihood does not exist.")
            logpdf, grads = _rank_one_logpdf(y.points, model.a, model.epsilon ** 2)
            return EstimatorEval(value=float(-logpdf.mean()), gradient=-grads.mean(axis=0))
        case SymGmmCovModel():
            if model.epsilon == 0.0:
                raise LikelihoodUndefinedError("a a^T + eps^2 I is singular at eps = 0; the likelihood does not exist.")
            parts = [_rank_one_logpdf(y.points - sign * model.mu, model.a, model.epsilon ** 2) for sign in (1.0, -1.0)]
            value, gradient = _mixture_nll(np.array([p[0] for p in parts]), np.array([p[1] for p in parts]))
            return EstimatorEval(value=value, gradient=gradient)
    raise UnsupportedError(f"No likelihood baseline for {type(model).__name__}.")

# ===================================================================
# OBJECTIVE HANDLES
# ===================================================================
# Each handle fixes everything but theta. The resampled MMD handle also takes
# the epoch index, which selects its fake-sample substream.

class OsmmdObjective:
    def __init__(self, template: ParametricModel, y: Sample, cfg: KernelConfig) -> None:
        self.template = template
        self.y = y
        self.cfg = cfg
        self._yy = yy_term(y, cfg)

    def evaluate(self, theta: np.ndarray) -> EstimatorEval:
        return osmmd(with_parameter(self.template, theta), self.y, self.cfg, yy=self._yy)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        result = self.evaluate(theta)
        return result.value, result.gradient

class NllObjective:
    def __init__(self, template: ParametricModel, y: Sample) -> None:
        self.template = template
        self.y = y

    def evaluate(self, theta: np.ndarray) -> EstimatorEval:
        return nll(with_parameter(self.template, theta), self.y)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        result = self.evaluate(theta)
        return result.value, result.gradient

class ResampledMmdObjective:
    """
    Empirical MMD with `n` fresh fakes per epoch. The fakes of epoch e come from
    SeedSequence([seed, FAKE_STREAM, e]), so a trajectory is reproducible.
    """

    def __init__(self, template: ParametricModel, y: Sample, cfg: KernelConfig, n: int, seed: int) -> None:
        if n < 2:
            raise InsufficientSampleError(f"Need at least 2 fake points per epoch, got {n}.")
        self.template = template
        self.y = y
        self.cfg = cfg
        self.n = n
        self.seed = seed
        self._yy = yy_term(y, cfg)

    def noise_for(self, step: int) -> ReparamNoise:
        return draw_noise(self.template, self.n, derive_rng(self.seed, FAKE_STREAM, step))

    def evaluate(self, theta: np.ndarray, step: int) -> EstimatorEval:
        model = with_parameter(self.template, theta)
        return empirical_mmd_eval(model, self.noise_for(step), self.y, self.cfg, yy=self._yy)

    def __call__(self, theta: np.ndarray, step: int) -> tuple[float, np.ndarray]:
        result = self.evaluate(theta, step)
        return result.value, result.gradient

    @property
    def dim(self) -> int:
        return parameter_of(self.template).size
