# tests/test_closed_form.py
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from mmdscape.closed_form import (
    ClosedFormObjective,
    cov_orthogonal_saddle,
    gmm_case_b_point,
    gmm_saddle_check,
    mmd_cov,
    mmd_gmm,
    mmd_mean,
)
from mmdscape.kernel import KernelConfig
from mmdscape.models import LowRankCovModel, MeanModel, SymGmmModel, derive_rng, sample, with_parameter
from mmdscape.optimize import CriticalLabel, classify_critical, finite_diff_gradient, finite_diff_hessian
from mmdscape.validation import InvalidArgumentError, InvalidModelError

def _monte_carlo_mmd(p_model, q_model, cfg: KernelConfig, pairs: int, seed: int) -> tuple[float, float]:
    """Unbiased MMD^2 from independent pairs (X, X', Y, Y'); returns (mean, standard error)."""
    x1 = sample(p_model, pairs, seed).points
    x2 = sample(p_model, pairs, seed + 1).points
    y1 = sample(q_model, pairs, seed + 2).points
    y2 = sample(q_model, pairs, seed + 3).points

    def k(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.exp(-np.sum((u - v) ** 2, axis=1) / (2.0 * cfg.bandwidth))

    terms = k(x1, x2) + k(y1, y2) - k(x1, y2) - k(x2, y1)
    return float(terms.mean()), float(terms.std() / np.sqrt(pairs))

# --- Gaussian with unknown mean ---

def test_mmd_mean_value_and_limit() -> None:
    """Known value at mu = 2 and the large-|mu| plateau."""
    model_star = MeanModel(mu=[0.0], sigma_cov=[[1.0]])
    cfg = KernelConfig(bandwidth=2.0)

    result = mmd_mean(model_star, np.array([2.0]), cfg)
    assert result.value == pytest.approx(np.sqrt(2.0) * (1.0 - np.exp(-0.5)), rel=1e-12), "Value at mu = 2"

    far = mmd_mean(model_star, np.array([1e4]), cfg)
    assert abs(far.value - np.sqrt(2.0)) <= 1e-6, "Value should approach 2 / sqrt|2 Sigma / sigma^2 + I|"
    assert np.linalg.norm(far.gradient) <= 1e-8, "Gradient should vanish far away"

    at_star = mmd_mean(model_star, np.array([0.0]), cfg)
    assert at_star.value == 0.0 and np.all(at_star.gradient == 0.0), "Zero value and gradient at mu*"

def test_mmd_mean_matches_monte_carlo() -> None:
    """The closed form agrees with a pairwise Monte-Carlo estimate."""
    model_star = MeanModel(mu=[0.5, -0.5], sigma_cov=[[1.0, 0.3], [0.3, 0.8]])
    cfg = KernelConfig(bandwidth=1.5)
    mu = np.array([1.5, 0.5])
    estimate, se = _monte_carlo_mmd(with_parameter(model_star, mu), model_star, cfg, 500_000, seed=11)
    assert abs(mmd_mean(model_star, mu, cfg).value - estimate) < 3.0 * se, "Closed form should match Monte Carlo"

def test_mmd_mean_quasi_convex() -> None:
    """Along every ray from mu* the value strictly increases."""
    rng = derive_rng(3)
    model_star = MeanModel(mu=rng.standard_normal(3), sigma_cov=np.eye(3))
    cfg = KernelConfig(bandwidth=2.0)
    for _ in range(10):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        values = [mmd_mean(model_star, model_star.mu + t * u, cfg).value for t in np.linspace(0.1, 6.0, 20)]
        assert np.all(np.diff(values) > 0.0), "Value should be strictly increasing along the ray"

# --- Gaussian with unknown rank-one covariance ---

def test_mmd_cov_value() -> None:
    """d = 1, eps = 0, sigma^2 = 1, a* = 1, a = 0 gives 1 + 1/sqrt(3) - sqrt(2)."""
    model_star = LowRankCovModel(a=[1.0], epsilon=0.0)
    result = mmd_cov(model_star, np.array([0.0]), KernelConfig(bandwidth=1.0))
    assert result.value == pytest.approx(1.0 + 1.0 / np.sqrt(3.0) - np.sqrt(2.0), rel=1e-12), "Plug-in value"
    assert mmd_cov(model_star, np.array([-1.0]), KernelConfig(bandwidth=1.0)).value == pytest.approx(0.0, abs=1e-12), \
        "-a* is also a global minimizer"

def test_mmd_cov_matches_monte_carlo() -> None:
    """Value with eps > 0 agrees with Monte Carlo."""
    model_star = LowRankCovModel(a=[1.0, -0.5], epsilon=0.4)
    cfg = KernelConfig(bandwidth=1.0)
    a = np.array([0.2, 0.9])
    estimate, se = _monte_carlo_mmd(with_parameter(model_star, a), model_star, cfg, 500_000, seed=21)
    assert abs(mmd_cov(model_star, a, cfg).value - estimate) < 3.0 * se, "Closed form should match Monte Carlo"

def test_cov_orthogonal_saddle() -> None:
    """Saddle ring radius for |a*|^2 = 1, c = 1, and its non-existence for small bandwidths."""
    model_star = LowRankCovModel(a=[1.0, 0.0], epsilon=0.0)
    cfg = KernelConfig(bandwidth=1.0)
    saddle = cov_orthogonal_saddle(model_star, cfg)

    expected = (2.0 ** (1.0 / 3.0) - 1.0) / (2.0 - 2.0 ** (1.0 / 3.0))
    assert saddle.exists, "The ring should exist for c > s / 7"
    assert saddle.radius_sq == pytest.approx(expected, rel=1e-12), "Radius should match the closed expression"

    on_ring = np.array([0.0, np.sqrt(saddle.radius_sq)])
    assert np.linalg.norm(mmd_cov(model_star, on_ring, cfg).gradient) <= 1e-8, "Gradient should vanish on the ring"

    big_star = LowRankCovModel(a=[3.0, 0.0], epsilon=0.0)
    assert not cov_orthogonal_saddle(big_star, cfg).exists, "No ring when c <= s / 7"
    with pytest.raises(InvalidModelError):
        cov_orthogonal_saddle(LowRankCovModel(a=[0.0, 0.0]), cfg)

# --- Symmetric mixture with unknown mean ---

def test_mmd_gmm_matches_monte_carlo() -> None:
    """d = 1, Sigma = 1, sigma^2 = 2, mu* = 1, mu = 0.5."""
    model_star = SymGmmModel(mu=[1.0], sigma_cov=[[1.0]])
    cfg = KernelConfig(bandwidth=2.0)
    mu = np.array([0.5])
    estimate, se = _monte_carlo_mmd(with_parameter(model_star, mu), model_star, cfg, 1_000_000, seed=31)
    assert abs(mmd_gmm(model_star, mu, cfg).value - estimate) < 3.0 * se, "Closed form should match Monte Carlo"

def test_mmd_gmm_symmetry() -> None:
    """The objective is even in mu and zero at both +mu* and -mu*."""
    model_star = SymGmmModel(mu=[1.0, 2.0], sigma_cov=np.eye(2))
    cfg = KernelConfig(bandwidth=1.0)
    mu = np.array([0.3, -0.4])
    assert mmd_gmm(model_star, mu, cfg).value == pytest.approx(mmd_gmm(model_star, -mu, cfg).value), "f(mu) = f(-mu)"
    assert mmd_gmm(model_star, -model_star.mu, cfg).value == pytest.approx(0.0, abs=1e-12), "-mu* is a minimizer"

def test_gmm_case_b_saddle() -> None:
    """Constructed case-(B) points are strict saddles with negative curvature along mu*."""
    model_star = SymGmmModel(mu=[1.0, 0.0], sigma_cov=np.eye(2))
    cfg = KernelConfig(bandwidth=2.0)
    objective = ClosedFormObjective(model_star, cfg)

    point = gmm_case_b_point(model_star, np.array([0.3, 1.0]), cfg)
    assert gmm_saddle_check(model_star, point, cfg), "Constructed point should pass the saddle check"
    assert np.linalg.norm(objective.evaluate(point).gradient) <= 1e-8, "Gradient should vanish"

    critical = classify_critical(objective, point)
    assert critical.label is CriticalLabel.STRICT_SADDLE, "Case-(B) points are strict saddles"
    assert critical.min_eig < -1e-10, "Minimum eigenvalue should be negative"
    cosine = abs(critical.min_eigvec @ model_star.mu) / np.linalg.norm(model_star.mu)
    assert cosine >= 0.99, "Negative curvature should point along mu*"

    # --- Failing Cases ---
    equal_norm = np.array([0.0, 1.0])
    assert not gmm_saddle_check(model_star, equal_norm, cfg), "Equal norms are not on the saddle set"
    assert np.linalg.norm(objective.evaluate(equal_norm).gradient) > 1e-4, "and are not stationary"
    with pytest.raises(InvalidArgumentError):
        gmm_case_b_point(model_star, np.array([2.0, 0.0]), cfg)

# --- Derivatives ---

@pytest.mark.parametrize("family", ['mean', 'cov', 'gmm'])
def test_closed_form_derivatives(family: str) -> None:
    """Gradients and Hessians agree with central differences at random points."""
    rng = derive_rng(41)
    cfg = KernelConfig(bandwidth=1.7)
    for _ in range(5):
        theta_star = rng.standard_normal(3)
        model_star = {
            'mean': lambda: MeanModel(mu=theta_star, sigma_cov=np.eye(3)),
            'cov': lambda: LowRankCovModel(a=theta_star, epsilon=0.3),
            'gmm': lambda: SymGmmModel(mu=theta_star, sigma_cov=np.eye(3)),
        }[family]()
        objective = ClosedFormObjective(model_star, cfg)
        theta = rng.standard_normal(3)
        result = objective.evaluate(theta, hessian=True)

        fd_grad = finite_diff_gradient(lambda t: objective.evaluate(t).value, theta)
        fd_hess = finite_diff_hessian(lambda t: objective.evaluate(t).gradient, theta)
        grad_scale = max(np.linalg.norm(result.gradient), 1e-8)
        hess_scale = max(np.linalg.norm(result.hessian), 1e-8)
        assert np.linalg.norm(result.gradient - fd_grad) / grad_scale <= 1e-5, f"{family} gradient mismatch"
        assert np.linalg.norm(result.hessian - fd_hess) / hess_scale <= 1e-4, f"{family} Hessian mismatch"

def test_closed_form_rejects_bad_input() -> None:
    """Dimension mismatches and unsupported families are rejected."""
    model_star = MeanModel(mu=[0.0, 0.0], sigma_cov=np.eye(2))
    with pytest.raises(InvalidArgumentError):
        mmd_mean(model_star, np.zeros(3), KernelConfig(bandwidth=1.0))
    assert mmd_mean(model_star, np.zeros(2), KernelConfig(bandwidth=1.0)).hessian is None, \
        "Hessian should only be formed on request"

# --- Landscape properties ---

@pytest.mark.parametrize("family", ['mean', 'cov', 'gmm'])
def test_closed_forms_are_rotation_equivariant(family: str) -> None:
    """With Sigma = I, rotating theta* and theta together leaves the value unchanged."""
    rng = derive_rng(51)
    cfg = KernelConfig(bandwidth=1.3)
    build = {
        'mean': lambda t: MeanModel(mu=t, sigma_cov=np.eye(4)),
        'cov': lambda t: LowRankCovModel(a=t, epsilon=0.2),
        'gmm': lambda t: SymGmmModel(mu=t, sigma_cov=np.eye(4)),
    }[family]
    for _ in range(5):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        theta_star, theta = rng.standard_normal(4), rng.standard_normal(4)
        plain = ClosedFormObjective(build(theta_star), cfg).evaluate(theta)
        rotated = ClosedFormObjective(build(q @ theta_star), cfg).evaluate(q @ theta)
        assert abs(plain.value - rotated.value) <= 1e-10, f"{family}: value changed under rotation"
        assert np.allclose(q @ plain.gradient, rotated.gradient, atol=1e-10), f"{family}: gradient should rotate"

def test_cov_ring_curves_down_along_a_star() -> None:
    """c = 10, |a*| = 1: the ring is stationary and a*^T H a* < 0 there."""
    model_star = LowRankCovModel(a=[1.0, 0.0, 0.0], epsilon=0.0)
    cfg = KernelConfig(bandwidth=10.0)
    saddle = cov_orthogonal_saddle(model_star, cfg)
    assert saddle.exists, "c = 10 > s / 7"

    for angle in np.linspace(0.0, np.pi, 4):
        on_ring = np.sqrt(saddle.radius_sq) * np.array([0.0, np.cos(angle), np.sin(angle)])
        result = mmd_cov(model_star, on_ring, cfg, hessian=True)
        assert np.linalg.norm(result.gradient) <= 1e-8, "The ring should be stationary"
        assert model_star.a @ result.hessian @ model_star.a < 0.0, "Curvature along a* should be negative"

def test_cov_saddle_boundary() -> None:
    """At c = s / 7 there is no ring; just above it the ring is far out."""
    at_boundary = LowRankCovModel(a=[np.sqrt(7.0), 0.0], epsilon=0.0)
    saddle = cov_orthogonal_saddle(at_boundary, KernelConfig(bandwidth=1.0))
    assert not saddle.exists and saddle.radius_sq is None, "c = s / 7 should not have a ring"

    via_epsilon = LowRankCovModel(a=[1.0, 0.0], epsilon=np.sqrt(1.0 / 28.0))
    assert not cov_orthogonal_saddle(via_epsilon, KernelConfig(bandwidth=1.0 / 14.0)).exists, \
        "c = 2 eps^2 + sigma^2 counts, not sigma^2 alone"

    above = cov_orthogonal_saddle(at_boundary, KernelConfig(bandwidth=1.001))
    assert above.exists, "Just above the boundary the ring exists"
    assert above.radius_sq > 100.0, "and its radius diverges towards the boundary"

def test_gmm_saddle_check_rejects_tilted_points() -> None:
    """Tilting a case-(B) point by 1 degree towards mu* keeps its norm but fails the check."""
    rng = derive_rng(52)
    model_star = SymGmmModel(mu=rng.standard_normal(3), sigma_cov=np.eye(3))
    cfg = KernelConfig(bandwidth=2.0)
    point = gmm_case_b_point(model_star, rng.standard_normal(3), cfg)
    assert gmm_saddle_check(model_star, point, cfg), "The constructed point should pass"

    tilt = np.deg2rad(1.0)
    unit_star = model_star.mu / np.linalg.norm(model_star.mu)
    tilted = np.linalg.norm(point) * (np.cos(tilt) * point / np.linalg.norm(point) + np.sin(tilt) * unit_star)
    assert np.linalg.norm(tilted) == pytest.approx(np.linalg.norm(point)), "The tilt keeps the norm"
    assert not gmm_saddle_check(model_star, tilted, cfg), "1 degree off orthogonal should fail"
    assert not gmm_saddle_check(model_star, model_star.mu, cfg), "mu* is a minimum, not a saddle"

# --- Monte-Carlo oracle ---

def _random_config(
    family: str, rng: np.random.Generator,
) -> tuple[MeanModel | LowRankCovModel | SymGmmModel, np.ndarray, KernelConfig]:
    dim = int(rng.choice([1, 2, 5]))
    cfg = KernelConfig(bandwidth=rng.uniform(0.5, 5.0))
    theta_star, theta = rng.standard_normal(dim), rng.standard_normal(dim)
    basis = rng.standard_normal((dim, dim))
    sigma_cov = basis @ basis.T / dim + 0.5 * np.eye(dim)
    model_star = {
        'mean': lambda: MeanModel(mu=theta_star, sigma_cov=sigma_cov),
        'cov': lambda: LowRankCovModel(a=theta_star, epsilon=rng.uniform(0.0, 0.5)),
        'gmm': lambda: SymGmmModel(mu=theta_star, sigma_cov=sigma_cov),
    }[family]()
    return model_star, theta, cfg

@pytest.mark.parametrize("family", ['mean', 'cov', 'gmm'])
def test_closed_forms_match_monte_carlo_at_random_configs(family: str) -> None:
    """Ten random (d, theta*, theta, sigma^2) per family agree with Monte Carlo within 4 standard errors."""
    rng = derive_rng(53, ['mean', 'cov', 'gmm'].index(family))
    for config in range(10):
        model_star, theta, cfg = _random_config(family, rng)
        closed = ClosedFormObjective(model_star, cfg).evaluate(theta).value
        estimate, se = _monte_carlo_mmd(with_parameter(model_star, theta), model_star, cfg, 200_000, seed=100 * config)
        assert abs(closed - estimate) <= 4.0 * se, \
            f"{family} config {config} (d={model_star.dim}): closed {closed:.6f}, Monte Carlo {estimate:.6f} +- {se:.1e}"
