# mmdscape/optimize.py
"""
First-order descent (GD, Adam), finite-difference oracles, and the multi-start
scanner that locates and labels the critical points of a closed-form objective.
"""
from __future__ import annotations
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from .closed_form import MmdEval
from .models import derive_rng
from .validation import DivergedError, InvalidArgumentError, NotCriticalError

logger = logging.getLogger(__name__)

# --- Type Aliases ---
GradientObjective = Callable[[np.ndarray], tuple[float, np.ndarray]]
# Objectives whose randomness depends on the epoch (fresh fakes per step).
SteppedObjective = Callable[[np.ndarray, int], tuple[float, np.ndarray]]
ScalarFunction = Callable[[np.ndarray], float]
VectorFunction = Callable[[np.ndarray], np.ndarray]

class HessianObjective(Protocol):
    def evaluate(self, theta: np.ndarray, hessian: bool = False) -> MmdEval: ...

CRITICAL_GRAD_TOL: float = 1e-6
REFINED_GRAD_TOL: float = 1e-8
EIGEN_TOL: float = 1e-10
ZERO_VALUE_TOL: float = 1e-10
DEDUP_RADIUS: float = 1e-4
POLISH_STEPS: int = 5

# ===================================================================
# 1. OPTIMIZER CONFIGURATION
# ===================================================================

class OptimizerMethod(Enum):
    GD = 'gd'
    ADAM = 'adam'

@dataclass(frozen=True)
class OptimizerConfig:
    method: OptimizerMethod = OptimizerMethod.ADAM
    learning_rate: float = 1e-1
    iterations: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, 'method', OptimizerMethod(self.method))
        except ValueError:
            raise InvalidArgumentError(f"Unknown optimizer '{self.method}'. Use 'gd' or 'adam'.") from None
        if not np.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}.")
        if isinstance(self.iterations, bool) or int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be an integer >= 1, got {self.iterations}.")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise InvalidArgumentError("Adam betas must lie in [0, 1).")
        if self.adam_eps <= 0:
            raise InvalidArgumentError(f"adam_eps must be > 0, got {self.adam_eps}.")
        object.__setattr__(self, 'iterations', int(self.iterations))

class Adam:
    """Adam with bias-corrected moments; one instance per trajectory."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        denom = np.sqrt(self.v / bc2) + self.epsilon
        return theta - (self.lr / bc1) * self.m / denom

# ===================================================================
# 2. TRAJECTORIES
# ===================================================================

@dataclass(frozen=True, eq=False)
class TrajectoryPoint:
    step: int
    theta: np.ndarray
    value: float
    grad_norm: float

@dataclass(eq=False)
class Trajectory:
    iterates: list[TrajectoryPoint] = field(default_factory=list)

    @property
    def final(self) -> TrajectoryPoint:
        if not self.iterates:
            raise InvalidArgumentError("Empty trajectory.")
        return self.iterates[-1]

    @property
    def values(self) -> np.ndarray:
        return np.array([point.value for point in self.iterates])

    def to_frame(self) -> pd.DataFrame:
        if not self.iterates:
            return pd.DataFrame(columns=['step', 'value', 'grad_norm'])
        params = np.vstack([point.theta for point in self.iterates])
        frame = pd.DataFrame(params, columns=[f"param_{i}" for i in range(params.shape[1])])
        frame.insert(0, 'step', [point.step for point in self.iterates])
        frame['value'] = self.values
        frame['grad_norm'] = [point.grad_norm for point in self.iterates]
        return frame

    def save_csv(self, path: Path) -> Path:
        path = Path(path)
        try:
            self.to_frame().to_csv(path, index=False, lineterminator='\n')
        except OSError as e:
            raise OSError(f"Could not write trajectory to {path}: {e}") from e
        logger.info(f"Wrote {len(self.iterates)} iterates to {path}")
        return path

def _checked_eval(objective: GradientObjective | SteppedObjective, theta: np.ndarray, step: int,
                  stepped: bool) -> tuple[float, np.ndarray]:
    value, grad = objective(theta, step) if stepped else objective(theta)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise DivergedError(step, f"non-finite objective (value={value}).")
    return float(value), grad

def run_descent(
    objective: GradientObjective | SteppedObjective,
    init: np.ndarray,
    cfg: OptimizerConfig,
    stepped: bool = False,
) -> Trajectory:
    """
    Runs cfg.iterations steps from init. With stepped=True the objective is
    called as objective(theta, step). The last iterate is evaluated once more
    so every recorded point carries its own value.
    """
    theta = np.array(init, dtype=np.float64)
    if theta.ndim != 1 or not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("init must be a finite vector.")
    adam = None
    if cfg.method is OptimizerMethod.ADAM:
        adam = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    trajectory = Trajectory()
    for step in range(cfg.iterations):
        value, grad = _checked_eval(objective, theta, step, stepped)
        trajectory.iterates.append(TrajectoryPoint(step, theta.copy(), value, float(np.linalg.norm(grad))))
        theta = adam.step(theta, grad) if adam is not None else theta - cfg.learning_rate * grad
        if not np.all(np.isfinite(theta)):
            raise DivergedError(step, "non-finite iterate.")

    value, grad = _checked_eval(objective, theta, cfg.iterations, stepped)
    trajectory.iterates.append(TrajectoryPoint(cfg.iterations, theta.copy(), value, float(np.linalg.norm(grad))))
    logger.debug(f"{cfg.method.value}: {cfg.iterations} steps, final value {value:.3e}")
    return trajectory

# ===================================================================
# 3. FINITE DIFFERENCES
# ===================================================================

def _fd_steps(point: np.ndarray) -> np.ndarray:
    return 1e-5 * (1.0 + np.abs(point))

def finite_diff_gradient(func: ScalarFunction, point: np.ndarray) -> np.ndarray:
    """Central differences with per-coordinate step h_i = 1e-5 (1 + |x_i|)."""
    point = np.atleast_1d(np.asarray(point, dtype=np.float64))
    steps = _fd_steps(point)
    grad = np.zeros(point.size)
    for i in range(point.size):
        e = np.zeros(point.size)
        e[i] = steps[i]
        grad[i] = (func(point + e) - func(point - e)) / (2.0 * steps[i])
    return grad

def finite_diff_hessian(gradient: VectorFunction, point: np.ndarray) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrized."""
    point = np.atleast_1d(np.asarray(point, dtype=np.float64))
    steps = _fd_steps(point)
    hess = np.zeros((point.size, point.size))
    for i in range(point.size):
        e = np.zeros(point.size)
        e[i] = steps[i]
        hess[:, i] = (np.asarray(gradient(point + e)) - np.asarray(gradient(point - e))) / (2.0 * steps[i])
    return 0.5 * (hess + hess.T)

# ===================================================================
# 4. CRITICAL POINTS
# ===================================================================

class CriticalLabel(Enum):
    GLOBAL_MIN_CANDIDATE = 'global-min-candidate'
    LOCAL_MAX = 'local-max'
    STRICT_SADDLE = 'strict-saddle'
    UNRESOLVED = 'unresolved'

@dataclass(frozen=True, eq=False)
class CriticalPoint:
    location: np.ndarray
    value: float
    grad_norm: float
    # Eigenvalues of the Hessian scaled to unit operator norm.
    min_eig: float
    max_eig: float
    label: CriticalLabel
    min_eigvec: np.ndarray

def classify_critical(
    objective: HessianObjective, point: np.ndarray, grad_tol: float = CRITICAL_GRAD_TOL,
) -> CriticalPoint:
    point = np.atleast_1d(np.asarray(point, dtype=np.float64))
    result = objective.evaluate(point, hessian=True)
    grad_norm = float(np.linalg.norm(result.gradient))
    if grad_norm > grad_tol:
        raise NotCriticalError(grad_norm, grad_tol)

    eigvals, eigvecs = np.linalg.eigh(result.hessian)
    scale = float(np.max(np.abs(eigvals)))
    if scale > 0.0:
        eigvals = eigvals / scale
    min_eig, max_eig = float(eigvals[0]), float(eigvals[-1])

    if min_eig >= -EIGEN_TOL and result.value <= ZERO_VALUE_TOL:
        label = CriticalLabel.GLOBAL_MIN_CANDIDATE
    elif max_eig < EIGEN_TOL and min_eig < -EIGEN_TOL:
        label = CriticalLabel.LOCAL_MAX
    elif min_eig < -EIGEN_TOL:
        label = CriticalLabel.STRICT_SADDLE
    else:
        label = CriticalLabel.UNRESOLVED
    return CriticalPoint(
        location=point, value=float(result.value), grad_norm=grad_norm,
        min_eig=min_eig, max_eig=max_eig, label=label, min_eigvec=eigvecs[:, 0],
    )

def _uniform_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=count) ** (1.0 / dim)
    return directions * radii[:, None]

def _refine(objective: HessianObjective, start: np.ndarray) -> np.ndarray:
    """
    Levenberg-Marquardt on the residual grad f (so saddles and maxima are
    reachable), then a few Newton steps, each kept only if it shrinks |grad f|.
    """
    fit = least_squares(
        lambda t: objective.evaluate(t).gradient,
        start,
        jac=lambda t: objective.evaluate(t, hessian=True).hessian,
        method='lm', xtol=1e-14, ftol=1e-14, gtol=1e-14,
    )
    theta = fit.x
    grad_norm = np.linalg.norm(objective.evaluate(theta).gradient)
    for _ in range(POLISH_STEPS):
        if grad_norm <= REFINED_GRAD_TOL * 1e-2:
            break
        result = objective.evaluate(theta, hessian=True)
        newton, *_ = np.linalg.lstsq(result.hessian, result.gradient, rcond=None)
        candidate = theta - newton
        candidate_norm = np.linalg.norm(objective.evaluate(candidate).gradient)
        if not candidate_norm < grad_norm:
            break
        theta, grad_norm = candidate, candidate_norm
    return theta

def scan_stationary(
    objective: HessianObjective, domain_radius: float, starts: int, seed: int, dim: int | None = None,
) -> list[CriticalPoint]:
    """
    Multi-start search for critical points inside the ball of radius
    `domain_radius`. Starts that do not refine to |grad| <= 1e-8 within twice the
    radius are dropped; survivors closer than 1e-4 are merged, then labelled.
    """
    if starts < 1:
        raise InvalidArgumentError(f"starts must be >= 1, got {starts}.")
    if domain_radius <= 0:
        raise InvalidArgumentError(f"domain_radius must be > 0, got {domain_radius}.")
    dim = dim if dim is not None else objective.dim
    rng = derive_rng(seed)

    found: list[np.ndarray] = []
    dropped = 0
    for start in _uniform_ball(rng, starts, dim, domain_radius):
        theta = _refine(objective, start)
        grad_norm = np.linalg.norm(objective.evaluate(theta).gradient)
        if grad_norm > REFINED_GRAD_TOL or np.linalg.norm(theta) > 2.0 * domain_radius:
            dropped += 1
            continue
        if all(np.linalg.norm(theta - other) > DEDUP_RADIUS for other in found):
            found.append(theta)

    if dropped:
        logger.warning(f"Scan dropped {dropped}/{starts} non-converged starts")
    points = [classify_critical(objective, theta) for theta in found]
    points.sort(key=lambda cp: (cp.value, tuple(cp.location)))
    logger.info(f"Scan found {len(points)} critical points from {starts} starts")
    return points
