# mmdscape/models.py
"""
Parametric families, reparameterized samplers and the seed contract.

Every sampler is written as ``x = g_theta(noise)``: the noise is drawn once by
``draw_noise`` and pushed through the model by ``push_forward``. ``sample`` is
the composition of both, and the empirical estimators differentiate through
``push_forward`` with the noise held fixed.
"""
from __future__ import annotations
import dataclasses
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TypeAlias

import numpy as np
import pandas as pd

from .family_registry import FamilyType
from .validation import InvalidArgumentError, InvalidModelError

logger = logging.getLogger(__name__)

SYMMETRY_TOL: float = 1e-12

# ===================================================================
# 1. SEED CONTRACT
# ===================================================================

def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Returns an independent generator for the substream (seed, *stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))

def derive_seed(seed: int, *stream: int) -> int:
    """Derives a 64-bit child seed for the substream (seed, *stream)."""
    state = np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(1, dtype=np.uint64)
    return int(state[0])

# ===================================================================
# 2. MODEL CONTAINERS
# ===================================================================

def _as_vector(values: np.ndarray | list[float], name: str) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1 or vector.size < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty vector, got shape {vector.shape}.")
    if not np.all(np.isfinite(vector)):
        raise InvalidArgumentError(f"{name} must be finite.")
    return vector

def _checked_covariance(sigma_cov: np.ndarray | list[list[float]], dim: int) -> np.ndarray:
    cov = np.asarray(sigma_cov, dtype=np.float64)
    if cov.shape != (dim, dim):
        raise InvalidArgumentError(f"sigma_cov must be {dim}x{dim}, got {cov.shape}.")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
        raise InvalidModelError("sigma_cov must be symmetric.")
    if np.linalg.eigvalsh(cov).min() <= 0.0:
        raise InvalidModelError("sigma_cov must be positive-definite.")
    return cov

@dataclass(frozen=True, eq=False)
class MeanModel:
    """N(mu, Sigma) with Sigma known."""
    mu: np.ndarray
    sigma_cov: np.ndarray

    def __post_init__(self) -> None:
        mu = _as_vector(self.mu, 'mu')
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'sigma_cov', _checked_covariance(self.sigma_cov, mu.size))

    @property
    def dim(self) -> int:
        return self.mu.size

    @cached_property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.sigma_cov)

@dataclass(frozen=True, eq=False)
class LowRankCovModel:
    """N(0, a a^T + eps^2 I); eps = 0 is allowed (singular covariance)."""
    a: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'a', _as_vector(self.a, 'a'))
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidModelError(f"epsilon must be >= 0, got {self.epsilon}.")
        object.__setattr__(self, 'epsilon', float(self.epsilon))

    @property
    def dim(self) -> int:
        return self.a.size

@dataclass(frozen=True, eq=False)
class SymGmmModel:
    """0.5 N(mu, Sigma) + 0.5 N(-mu, Sigma) with Sigma known."""
    mu: np.ndarray
    sigma_cov: np.ndarray

    def __post_init__(self) -> None:
        mu = _as_vector(self.mu, 'mu')
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'sigma_cov', _checked_covariance(self.sigma_cov, mu.size))

    @property
    def dim(self) -> int:
        return self.mu.size

    @cached_property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.sigma_cov)

@dataclass(frozen=True, eq=False)
class SymGmmCovModel:
    """0.5 N(mu, a a^T + eps^2 I) + 0.5 N(-mu, a a^T + eps^2 I); mu and eps known, a unknown."""
    a: np.ndarray
    mu: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        a = _as_vector(self.a, 'a')
        mu = _as_vector(self.mu, 'mu')
        if a.size != mu.size:
            raise InvalidArgumentError(f"a and mu must have the same length ({a.size} != {mu.size}).")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidModelError(f"epsilon must be >= 0, got {self.epsilon}.")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'epsilon', float(self.epsilon))

    @property
    def dim(self) -> int:
        return self.a.size

@dataclass(frozen=True, eq=False)
class UnmixingModel:
    """x = A b + w with b ~ Dirichlet(1_r) and w ~ N(0, noise_var I)."""
    a_matrix: np.ndarray
    noise_var: float

    def __post_init__(self) -> None:
        a_matrix = np.asarray(self.a_matrix, dtype=np.float64)
        if a_matrix.ndim != 2:
            raise InvalidArgumentError(f"a_matrix must be 2-D, got shape {a_matrix.shape}.")
        d, r = a_matrix.shape
        if r < 2 or d < r:
            raise InvalidModelError(f"Unmixing needs r >= 2 and d >= r, got d={d}, r={r}.")
        if not np.all(np.isfinite(a_matrix)):
            raise InvalidArgumentError("a_matrix must be finite.")
        if not np.isfinite(self.noise_var) or self.noise_var < 0:
            raise InvalidModelError(f"noise_var must be >= 0, got {self.noise_var}.")
        object.__setattr__(self, 'a_matrix', a_matrix)
        object.__setattr__(self, 'noise_var', float(self.noise_var))

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.a_matrix.shape[1]

ParametricModel: TypeAlias = MeanModel | LowRankCovModel | SymGmmModel | SymGmmCovModel | UnmixingModel
GaussianFamilyModel: TypeAlias = MeanModel | LowRankCovModel | SymGmmModel | SymGmmCovModel

@dataclass(frozen=True, eq=False)
class Sample:
    points: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise InvalidArgumentError(f"A sample needs at least one row, got shape {points.shape}.")
        if not np.all(np.isfinite(points)):
            raise InvalidArgumentError("Sample points must be finite.")
        object.__setattr__(self, 'points', points)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

def family_of(model: ParametricModel) -> FamilyType | None:
    """Family tag of a model; None for the unmixing model."""
    match model:
        case MeanModel():
            return FamilyType.MEAN
        case LowRankCovModel():
            return FamilyType.COV
        case SymGmmModel():
            return FamilyType.GMM
        case SymGmmCovModel():
            return FamilyType.GMM_COV
        case _:
            return None

def parameter_of(model: ParametricModel) -> np.ndarray:
    """The unknown parameter as a flat vector (A is flattened row-major)."""
    match model:
        case MeanModel() | SymGmmModel():
            return model.mu.copy()
        case LowRankCovModel() | SymGmmCovModel():
            return model.a.copy()
        case UnmixingModel():
            return model.a_matrix.ravel().copy()
    raise InvalidArgumentError(f"Unknown model type {type(model).__name__}.")

def with_parameter(model: ParametricModel, theta: np.ndarray) -> ParametricModel:
    """Same model with the unknown parameter replaced by theta."""
    theta = np.asarray(theta, dtype=np.float64)
    match model:
        case MeanModel() | SymGmmModel():
            return dataclasses.replace(model, mu=theta)
        case LowRankCovModel() | SymGmmCovModel():
            return dataclasses.replace(model, a=theta)
        case UnmixingModel():
            return dataclasses.replace(model, a_matrix=theta.reshape(model.a_matrix.shape))
    raise InvalidArgumentError(f"Unknown model type {type(model).__name__}.")

# ===================================================================
# 3. REPARAMETERIZED SAMPLING
# ===================================================================

@dataclass(frozen=True, eq=False)
class ReparamNoise:
    """Parameter-free randomness of one draw; which fields are set depends on the family."""
    w: np.ndarray                              # (count, d) standard normal
    z: np.ndarray | None = None                # (count,) scalar latent (rank-one families)
    signs: np.ndarray | None = None            # (count,) +-1 component labels (mixtures)
    b: np.ndarray | None = None                # (count, r) Dirichlet(1_r) abundances

    @property
    def count(self) -> int:
        return self.w.shape[0]

def draw_noise(model: ParametricModel, count: int, rng: np.random.Generator) -> ReparamNoise:
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}.")
    d = model.dim
    match model:
        case MeanModel():
            return ReparamNoise(w=rng.standard_normal((count, d)))
        case LowRankCovModel():
            z = rng.standard_normal(count)
            return ReparamNoise(w=rng.standard_normal((count, d)), z=z)
        case SymGmmModel():
            signs = 2.0 * rng.integers(0, 2, size=count) - 1.0
            return ReparamNoise(w=rng.standard_normal((count, d)), signs=signs)
        case SymGmmCovModel():
            signs = 2.0 * rng.integers(0, 2, size=count) - 1.0
            z = rng.standard_normal(count)
            return ReparamNoise(w=rng.standard_normal((count, d)), z=z, signs=signs)
        case UnmixingModel():
            # Dirichlet(1_r) as normalized unit-rate exponentials.
            expo = rng.standard_exponential((count, model.rank))
            b = expo / expo.sum(axis=1, keepdims=True)
            return ReparamNoise(w=rng.standard_normal((count, d)), b=b)
    raise InvalidArgumentError(f"Unknown model type {type(model).__name__}.")

def push_forward(model: ParametricModel, noise: ReparamNoise) -> np.ndarray:
    """Maps noise to points: x = g_theta(noise)."""
    match model:
        case MeanModel():
            return model.mu + noise.w @ model.chol.T
        case LowRankCovModel():
            return np.outer(noise.z, model.a) + model.epsilon * noise.w
        case SymGmmModel():
            return np.outer(noise.signs, model.mu) + noise.w @ model.chol.T
        case SymGmmCovModel():
            return np.outer(noise.signs, model.mu) + np.outer(noise.z, model.a) + model.epsilon * noise.w
        case UnmixingModel():
            return noise.b @ model.a_matrix.T + np.sqrt(model.noise_var) * noise.w
    raise InvalidArgumentError(f"Unknown model type {type(model).__name__}.")

def sample(model: ParametricModel, count: int, seed: int) -> Sample:
    """Draws `count` i.i.d. points; identical (model, count, seed) gives identical points."""
    noise = draw_noise(model, count, derive_rng(seed))
    return Sample(points=push_forward(model, noise), seed=int(seed))

def random_unmixing_model(dim: int, rank: int, noise_var: float, rng: np.random.Generator) -> UnmixingModel:
    """Ground-truth model with standard-normal endmembers and full column rank."""
    a_matrix = rng.standard_normal((dim, rank))
    if np.linalg.matrix_rank(a_matrix) < rank:
        raise InvalidModelError(f"Drawn endmember matrix is rank deficient (< {rank}).")
    return UnmixingModel(a_matrix=a_matrix, noise_var=noise_var)

# ===================================================================
# 4. WHITENING
# ===================================================================

def whiten_gmm(model: SymGmmModel) -> tuple[SymGmmModel, np.ndarray]:
    """
    Returns the equivalent mixture with identity covariance and mean
    Sigma^{-1/2} mu, together with the matrix Sigma^{-1/2}.
    """
    eigvals, eigvecs = np.linalg.eigh(model.sigma_cov)
    if eigvals.min() <= 0.0:
        raise InvalidModelError("sigma_cov must be positive-definite to whiten.")
    transform = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    whitened = SymGmmModel(mu=transform @ model.mu, sigma_cov=np.eye(model.dim))
    return whitened, transform

def unwhiten(transform: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Inverse of the whitening transform applied to a vector."""
    return np.linalg.solve(transform, vector)

# ===================================================================
# 5. CSV EXPORT
# ===================================================================

def save_sample_csv(sample_: Sample, path: Path) -> Path:
    """One point per row, comma separated, no header."""
    path = Path(path)
    try:
        pd.DataFrame(sample_.points).to_csv(path, header=False, index=False, lineterminator='\n')
    except OSError as e:
        raise OSError(f"Could not write sample to {path}: {e}") from e
    logger.info(f"Wrote {sample_.count} points to {path}")
    return path

def load_sample_csv(path: Path) -> Sample:
    frame = pd.read_csv(Path(path), header=None, dtype=np.float64)
    return Sample(points=frame.to_numpy())
