# tests/test_optimize.py
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from mmdscape.closed_form import ClosedFormObjective, MmdEval, cov_orthogonal_saddle, gmm_saddle_check
from mmdscape.kernel import KernelConfig
from mmdscape.models import LowRankCovModel, MeanModel, SymGmmModel, derive_rng
from mmdscape.optimize import (
    Adam,
    CriticalLabel,
    OptimizerConfig,
    OptimizerMethod,
    classify_critical,
    finite_diff_gradient,
    finite_diff_hessian,
    run_descent,
    scan_stationary,
)
from mmdscape.validation import DivergedError, InvalidArgumentError, NotCriticalError

def bowl(theta: np.ndarray) -> tuple[float, np.ndarray]:
    return 0.5 * float(theta @ theta), theta.copy()

class Quadratic:
    """f(x) = 1/2 x^T H x, exposing the Hessian interface of the closed forms."""

    def __init__(self, hessian: np.ndarray) -> None:
        self.hessian = np.asarray(hessian, dtype=np.float64)
        self.dim = self.hessian.shape[0]

    def evaluate(self, theta: np.ndarray, hessian: bool = False) -> MmdEval:
        return MmdEval(
            value=0.5 * float(theta @ self.hessian @ theta),
            gradient=self.hessian @ theta,
            hessian=self.hessian if hessian else None,
        )

# --- Descent ---

def test_gradient_descent_halves_the_bowl() -> None:
    """GD with lr 0.5 on 1/2 |x|^2 halves the iterate each step."""
    cfg = OptimizerConfig(method='gd', learning_rate=0.5, iterations=30)
    trajectory = run_descent(bowl, np.array([2.0, 0.0]), cfg)

    assert len(trajectory.iterates) == 31, "Should record every step plus the final point"
    assert np.allclose(trajectory.iterates[1].theta, [1.0, 0.0]), "First step should halve the iterate"
    assert np.linalg.norm(trajectory.final.theta) <= 2.0 * 2.0 ** -30, "Should contract geometrically"
    assert np.all(np.diff(trajectory.values) < 0.0), "Values should decrease monotonically"

def test_adam_first_step() -> None:
    """Adam's first bias-corrected step moves each coordinate by about lr against the gradient sign."""
    adam = Adam(lr=0.1)
    theta = adam.step(np.array([1.0, -3.0]), np.array([2.0, -0.5]))
    assert np.allclose(theta, [0.9, -2.9], atol=1e-6), "First step should be lr * sign(grad)"

def test_adam_converges() -> None:
    """Adam reaches the minimum of the bowl."""
    cfg = OptimizerConfig(method='adam', learning_rate=0.1, iterations=500)
    trajectory = run_descent(bowl, np.array([3.0, -2.0]), cfg)
    assert np.linalg.norm(trajectory.final.theta) < 1e-2, "Adam should approach the origin"

def test_stepped_objective_gets_the_epoch() -> None:
    """With stepped=True the objective receives the step index."""
    seen: list[int] = []

    def objective(theta: np.ndarray, step: int) -> tuple[float, np.ndarray]:
        seen.append(step)
        return bowl(theta)

    run_descent(objective, np.ones(2), OptimizerConfig(method='gd', learning_rate=0.1, iterations=5), stepped=True)
    assert seen == [0, 1, 2, 3, 4, 5], "Should pass 0..iterations, including the final evaluation"

def test_divergence_is_reported() -> None:
    """A non-finite value raises DivergedError with its step."""
    def exploding(theta: np.ndarray) -> tuple[float, np.ndarray]:
        value = float(np.exp(theta @ theta))
        return value, 2.0 * value * theta

    cfg = OptimizerConfig(method='gd', learning_rate=10.0, iterations=100)
    with pytest.raises(DivergedError) as info:
        run_descent(exploding, np.array([3.0]), cfg)
    assert info.value.step < 100, "Should stop at the first non-finite step"

def test_optimizer_config_validation() -> None:
    """Bad settings are rejected; method strings become enums."""
    assert OptimizerConfig(method='gd').method is OptimizerMethod.GD, "String methods should be coerced"
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(method='sgd')
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(learning_rate=0.0)
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(iterations=0)

def test_trajectory_csv(tmp_path: Path) -> None:
    """Trajectories export step, parameters, value and gradient norm."""
    trajectory = run_descent(bowl, np.array([1.0, 2.0]), OptimizerConfig(method='gd', learning_rate=0.5, iterations=3))
    path = trajectory.save_csv(tmp_path / 'trajectory.csv')
    header = path.read_text().splitlines()[0]
    assert header == 'step,param_0,param_1,value,grad_norm', "CSV header should list the columns in order"

# --- Finite differences ---

def test_finite_differences() -> None:
    """Central differences recover the gradient and Hessian of a cubic."""
    def cubic(x: np.ndarray) -> float:
        return float(x[0] ** 3 + x[0] * x[1] ** 2)

    def cubic_grad(x: np.ndarray) -> np.ndarray:
        return np.array([3.0 * x[0] ** 2 + x[1] ** 2, 2.0 * x[0] * x[1]])

    point = np.array([0.7, -1.3])
    assert np.allclose(finite_diff_gradient(cubic, point), cubic_grad(point), rtol=1e-8), "Gradient"
    expected_hess = np.array([[6.0 * point[0], 2.0 * point[1]], [2.0 * point[1], 2.0 * point[0]]])
    assert np.allclose(finite_diff_hessian(cubic_grad, point), expected_hess, rtol=1e-7), "Hessian"

# --- Critical points ---

def test_classify_critical_labels() -> None:
    """Minimum, maximum and saddle of quadratics are labelled by the Hessian spectrum."""
    origin = np.zeros(2)
    assert classify_critical(Quadratic(np.diag([1.0, 2.0])), origin).label is CriticalLabel.GLOBAL_MIN_CANDIDATE, \
        "PD Hessian with zero value"
    assert classify_critical(Quadratic(np.diag([-1.0, -2.0])), origin).label is CriticalLabel.LOCAL_MAX, \
        "ND Hessian"
    saddle = classify_critical(Quadratic(np.diag([1.0, -2.0])), origin)
    assert saddle.label is CriticalLabel.STRICT_SADDLE, "Indefinite Hessian"
    assert saddle.min_eig == pytest.approx(-1.0), "Eigenvalues should be scaled to unit operator norm"
    assert abs(saddle.min_eigvec[1]) == pytest.approx(1.0), "Eigenvector of the negative eigenvalue"

    with pytest.raises(NotCriticalError):
        classify_critical(Quadratic(np.eye(2)), np.array([1.0, 0.0]))

def test_mean_landscape_has_one_critical_point() -> None:
    """The mean objective has a single stationary point at mu* (inside the basin)."""
    model_star = MeanModel(mu=[0.5, -0.5], sigma_cov=np.eye(2))
    objective = ClosedFormObjective(model_star, KernelConfig(bandwidth=10.0))
    points = scan_stationary(objective, domain_radius=2.0, starts=20, seed=0)

    assert len(points) == 1, "Only mu* should be found"
    assert np.allclose(points[0].location, model_star.mu, atol=1e-6), "The critical point should be mu*"
    assert points[0].label is CriticalLabel.GLOBAL_MIN_CANDIDATE, "mu* is the global minimum"

def test_cov_landscape_exhaustive() -> None:
    """d = 2, eps = 0, sigma^2 = 1, |a*| = 1: minima at +-a*, a maximum at 0 and two saddles on the ring."""
    model_star = LowRankCovModel(a=[1.0, 0.0], epsilon=0.0)
    cfg = KernelConfig(bandwidth=1.0)
    objective = ClosedFormObjective(model_star, cfg)
    points = scan_stationary(objective, domain_radius=2.0, starts=200, seed=1)
    radius_sq = cov_orthogonal_saddle(model_star, cfg).radius_sq

    labels = sorted(p.label.value for p in points)
    assert labels == sorted(['global-min-candidate'] * 2 + ['local-max'] + ['strict-saddle'] * 2), \
        f"Unexpected critical set: {labels}"
    for point in points:
        match point.label:
            case CriticalLabel.GLOBAL_MIN_CANDIDATE:
                assert abs(abs(point.location[0]) - 1.0) < 1e-6, "Minima should be +-a*"
            case CriticalLabel.LOCAL_MAX:
                assert np.linalg.norm(point.location) < 1e-6, "The maximum should be the origin"
            case CriticalLabel.STRICT_SADDLE:
                assert abs(point.location[0]) < 1e-6, "Saddles should be orthogonal to a*"
                assert point.location @ point.location == pytest.approx(radius_sq, rel=1e-6), "Saddles sit on the ring"
                assert point.min_eig < -1e-10, "Saddles need negative curvature"
                assert abs(point.min_eigvec[0]) > 0.99, "Negative curvature should point along a*"

def test_scan_is_deterministic() -> None:
    """The same seed gives the same critical set."""
    objective = ClosedFormObjective(LowRankCovModel(a=[1.0, 0.5], epsilon=0.2), KernelConfig(bandwidth=2.0))
    first = scan_stationary(objective, domain_radius=2.0, starts=30, seed=5)
    second = scan_stationary(objective, domain_radius=2.0, starts=30, seed=5)
    assert [p.label for p in first] == [p.label for p in second], "Labels should match"
    assert all(np.allclose(a.location, b.location) for a, b in zip(first, second)), "Locations should match"
    with pytest.raises(InvalidArgumentError):
        scan_stationary(objective, domain_radius=2.0, starts=0, seed=5)

# --- Descent on the closed forms ---

def _unit_target(family: str, theta_star: np.ndarray) -> MeanModel | LowRankCovModel | SymGmmModel:
    match family:
        case 'mean':
            return MeanModel(mu=theta_star, sigma_cov=np.eye(theta_star.size))
        case 'cov':
            return LowRankCovModel(a=theta_star, epsilon=0.0)
        case 'gmm':
            return SymGmmModel(mu=theta_star, sigma_cov=np.eye(theta_star.size))
    raise ValueError(family)

def _ball_starts(seed: int, count: int, dim: int, radius: float) -> np.ndarray:
    rng = derive_rng(seed)
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * (radius * rng.uniform(size=count) ** (1.0 / dim))[:, None]

def _gd_config(objective: ClosedFormObjective, theta_star: np.ndarray, iterations: int) -> OptimizerConfig:
    """GD with half the stable step at the minimizer."""
    top = np.linalg.eigvalsh(objective.evaluate(theta_star, hessian=True).hessian)[-1]
    return OptimizerConfig(method='gd', learning_rate=0.5 / top, iterations=iterations)

def _sign_aware_distance(family: str, theta: np.ndarray, target: np.ndarray) -> float:
    distance = np.linalg.norm(theta - target)
    if family == 'mean':
        return float(distance)
    return float(min(distance, np.linalg.norm(theta + target)))

def test_mmd_mean_gradient_descent_recursion() -> None:
    """d = 1, sigma^2 = 10, mu* = 0, mu = 3, lr 0.1: GD follows the scalar recursion exactly."""
    objective = ClosedFormObjective(MeanModel(mu=[0.0], sigma_cov=[[1.0]]), KernelConfig(bandwidth=10.0))
    trajectory = run_descent(objective, np.array([3.0]), OptimizerConfig(method='gd', learning_rate=0.1, iterations=500))

    # grad = 2 kappa / (2 + sigma^2) exp(-mu^2 / (2 (2 + sigma^2))) mu
    kappa = np.sqrt(10.0 / 12.0)
    mu = 3.0
    for _ in range(500):
        mu -= 0.1 * 2.0 * kappa / 12.0 * np.exp(-mu * mu / 24.0) * mu
    final = trajectory.final.theta[0]
    assert final == pytest.approx(mu, rel=1e-9), "run_descent should match the scalar recursion"
    assert 1e-3 < abs(final) < 2.5e-3, f"500 steps end near 1.7e-3, got {final:.3e}"
    assert np.all(np.diff(np.abs([p.theta[0] for p in trajectory.iterates])) < 0.0), "|mu| shrinks every step"

    longer = run_descent(objective, np.array([3.0]), OptimizerConfig(method='gd', learning_rate=0.1, iterations=1500))
    assert abs(longer.final.theta[0]) <= 1e-4, "1500 steps should reach 1e-4"

def test_gradient_descent_at_the_cov_saddle() -> None:
    """Started on the saddle ring GD stays put; a 1e-3 push along a* escapes to a*."""
    model_star = LowRankCovModel(a=[1.0, 0.0, 0.0], epsilon=0.0)
    cfg = KernelConfig(bandwidth=1.0)
    objective = ClosedFormObjective(model_star, cfg)
    on_ring = np.array([0.0, np.sqrt(cov_orthogonal_saddle(model_star, cfg).radius_sq), 0.0])

    stuck = run_descent(objective, on_ring, OptimizerConfig(method='gd', learning_rate=0.5, iterations=500))
    drift = max(np.linalg.norm(point.theta - on_ring) for point in stuck.iterates)
    assert drift <= 1e-6, f"Iterates should not leave the saddle, drifted {drift:.2e}"
    assert max(point.grad_norm for point in stuck.iterates) <= 1e-8, "Gradient should stay at zero"

    pushed = run_descent(
        objective, on_ring + 1e-3 * model_star.a, OptimizerConfig(method='gd', learning_rate=0.5, iterations=2000),
    )
    assert np.linalg.norm(pushed.final.theta - model_star.a) <= 1e-6, "The push should end at +a*"
    assert pushed.final.value <= 1e-12, "and at the global minimum"

@pytest.mark.parametrize("family", ['mean', 'cov', 'gmm'])
def test_gradient_descent_from_random_starts(family: str) -> None:
    """|theta*| = 1, r = 2, sigma^2 = 2 r^2: GD from the ball of radius r reaches a global minimum."""
    theta_star = np.array([0.6, 0.0, 0.8])
    objective = ClosedFormObjective(_unit_target(family, theta_star), KernelConfig(bandwidth=8.0))
    cfg = _gd_config(objective, theta_star, iterations=1000)

    converged = 0
    for init in _ball_starts(7, 20, 3, 2.0):
        trajectory = run_descent(objective, init, cfg)
        converged += trajectory.final.value <= 1e-8
    assert converged >= 19, f"{family}: only {converged}/20 starts converged"

@pytest.mark.parametrize("family", ['mean', 'cov', 'gmm'])
def test_adam_and_gradient_descent_agree(family: str) -> None:
    """Adam at lr 0.1 ends at the same minimizer as GD (up to the sign symmetry)."""
    theta_star = np.array([0.6, 0.0, 0.8])
    objective = ClosedFormObjective(_unit_target(family, theta_star), KernelConfig(bandwidth=8.0))
    gd_cfg = _gd_config(objective, theta_star, iterations=1000)
    adam_cfg = OptimizerConfig(method='adam', learning_rate=0.1, iterations=1000)

    for init in _ball_starts(8, 5, 3, 2.0):
        gd_final = run_descent(objective, init, gd_cfg).final.theta
        adam_final = run_descent(objective, init, adam_cfg).final.theta
        assert _sign_aware_distance(family, gd_final, theta_star) <= 1e-6, "GD should reach theta*"
        assert _sign_aware_distance(family, adam_final, gd_final) <= 1e-3, \
            f"{family}: Adam ended at {adam_final}, GD at {gd_final}"

# --- Predicted critical sets ---

def _distance_to_cov_set(point: np.ndarray, model_star: LowRankCovModel, cfg: KernelConfig) -> float:
    a_star = model_star.a
    candidates = [np.linalg.norm(point - a_star), np.linalg.norm(point + a_star), np.linalg.norm(point)]
    saddle = cov_orthogonal_saddle(model_star, cfg)
    if saddle.exists:
        unit = a_star / np.linalg.norm(a_star)
        along = point @ unit
        across = np.linalg.norm(point - along * unit)
        candidates.append(np.hypot(along, across - np.sqrt(saddle.radius_sq)))
    return float(min(candidates))

def _distance_to_gmm_set(point: np.ndarray, model_star: SymGmmModel) -> float:
    """Identity Sigma: +-mu*, 0 and the sphere |mu|^2 = |mu*|^2 / 3 orthogonal to mu*."""
    mu_star = model_star.mu
    unit = mu_star / np.linalg.norm(mu_star)
    along = point @ unit
    across = np.linalg.norm(point - along * unit)
    candidates = [
        np.linalg.norm(point - mu_star),
        np.linalg.norm(point + mu_star),
        np.linalg.norm(point),
        np.hypot(along, across - np.linalg.norm(mu_star) / np.sqrt(3.0)),
    ]
    return float(min(candidates))

def test_cov_critical_points_lie_in_the_predicted_set() -> None:
    """Random a*, eps and sigma^2 in d = 3: every scanned critical point is +-a*, 0 or on the ring."""
    rng = derive_rng(21)
    for config in range(3):
        direction = rng.standard_normal(3)
        a_star = direction / np.linalg.norm(direction) * rng.uniform(0.8, 1.5)
        model_star = LowRankCovModel(a=a_star, epsilon=rng.uniform(0.0, 0.5))
        cfg = KernelConfig(bandwidth=rng.uniform(0.5, 3.0))
        objective = ClosedFormObjective(model_star, cfg)
        points = scan_stationary(objective, domain_radius=np.linalg.norm(a_star) + 1.0, starts=60, seed=config)

        assert points, "The scan should find critical points"
        for point in points:
            distance = _distance_to_cov_set(point.location, model_star, cfg)
            assert distance <= 1e-3, f"Config {config}: {point.location} is {distance:.2e} from the predicted set"
        minima = [p for p in points if p.label is CriticalLabel.GLOBAL_MIN_CANDIDATE]
        assert minima and all(_sign_aware_distance('cov', p.location, a_star) <= 1e-6 for p in minima), \
            f"Config {config}: minima should be +-a*"

def test_gmm_critical_points_lie_in_the_predicted_set() -> None:
    """Random mu* and sigma^2 in d = 3 with Sigma = I: +-mu*, 0 or the orthogonal sphere."""
    rng = derive_rng(22)
    for config in range(3):
        direction = rng.standard_normal(3)
        mu_star = direction / np.linalg.norm(direction) * rng.uniform(0.8, 1.5)
        model_star = SymGmmModel(mu=mu_star, sigma_cov=np.eye(3))
        cfg = KernelConfig(bandwidth=rng.uniform(1.0, 3.0))
        objective = ClosedFormObjective(model_star, cfg)
        points = scan_stationary(objective, domain_radius=np.linalg.norm(mu_star) + 1.0, starts=60, seed=config)

        assert points, "The scan should find critical points"
        for point in points:
            distance = _distance_to_gmm_set(point.location, model_star)
            assert distance <= 1e-3, f"Config {config}: {point.location} is {distance:.2e} from the predicted set"
            if point.label is CriticalLabel.STRICT_SADDLE:
                assert gmm_saddle_check(model_star, point.location, cfg, tol=1e-6), \
                    "Saddles should pass the saddle check"

def test_gmm_landscape_exhaustive() -> None:
    """d = 2, Sigma = I, sigma^2 = 2, mu* = (1, 0): minima +-mu*, a maximum at 0, saddles at (0, +-1/sqrt 3)."""
    model_star = SymGmmModel(mu=[1.0, 0.0], sigma_cov=np.eye(2))
    cfg = KernelConfig(bandwidth=2.0)
    objective = ClosedFormObjective(model_star, cfg)
    points = scan_stationary(objective, domain_radius=2.0, starts=200, seed=2)

    labels = sorted(p.label.value for p in points)
    assert labels == sorted(['global-min-candidate'] * 2 + ['local-max'] + ['strict-saddle'] * 2), \
        f"Unexpected critical set: {labels}"
    for point in points:
        match point.label:
            case CriticalLabel.GLOBAL_MIN_CANDIDATE:
                assert _sign_aware_distance('gmm', point.location, model_star.mu) < 1e-6, "Minima should be +-mu*"
            case CriticalLabel.LOCAL_MAX:
                assert np.linalg.norm(point.location) < 1e-6, "The maximum should be the origin"
            case CriticalLabel.STRICT_SADDLE:
                assert abs(point.location[0]) < 1e-6, "Saddles should be orthogonal to mu*"
                assert abs(point.location[1]) == pytest.approx(1.0 / np.sqrt(3.0), rel=1e-6), \
                    "Saddles sit at |mu|^2 = |mu*|^2 / 3"
                assert gmm_saddle_check(model_star, point.location, cfg), "Saddles should pass the saddle check"
                assert abs(point.min_eigvec[0]) > 0.99, "Negative curvature should point along mu*"
