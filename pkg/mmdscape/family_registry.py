from __future__ import annotations
from enum import Enum
from typing import TypedDict

# ===================================================================
# 1. DEFINE THE "PRODUCTS" - THE ESTIMATION PROBLEMS AND ESTIMATORS
# ===================================================================
# These Enums provide type-safe identifiers for each family and estimator.
# The values are the tags used on the command line and in results.csv.

class FamilyType(Enum):
    MEAN = 'mean'
    COV = 'cov'
    GMM = 'gmm'
    GMM_COV = 'gmm-cov'

class EstimatorType(Enum):
    MMD = 'mmd'
    OSMMD = 'osmmd'
    MLE = 'mle'
    # WGAN = 'wgan'  # reserved tag, no implementation

class ErrorMetric(Enum):
    MEAN_DISTANCE = 'mean-distance'   # ||mu - mu*|| / d (sign-aware for mixtures)
    OUTER_PRODUCT = 'outer-product'   # ||a a^T - a* a*^T||_F / d

# ===================================================================
# 2. DEFINE THE "BLUEPRINT" FOR EACH FAMILY
# ===================================================================

class EstimatorSettings(TypedDict):
    """Tuned optimizer settings for one estimator on one family."""
    learning_rate: float
    iterations: int
    # Kernel width sigma^2; None for likelihood-based estimators.
    bandwidth: float | None

class FamilyProfile(TypedDict):
    """A blueprint for one recovery experiment."""
    name: str
    description: str
    family: FamilyType
    error_metric: ErrorMetric
    success_threshold: float
    repeats: int
    estimators: dict[EstimatorType, EstimatorSettings]

# ===================================================================
# 3. BUILD THE "FACTORY" - THE REGISTRY OF ALL BLUEPRINTS
# ===================================================================
# Values come from the hyperparameter tables of the recovery experiments.
# Keys are profile names; most equal the family tag.

FAMILY_REGISTRY: dict[str, FamilyProfile] = {
    'mean': {
        'name': "Gaussian with unknown mean",
        'description': "N(mu, Sigma) with Sigma known.",
        'family': FamilyType.MEAN,
        'error_metric': ErrorMetric.MEAN_DISTANCE,
        'success_threshold': 0.02,
        'repeats': 100,
        'estimators': {
            EstimatorType.MMD: {'learning_rate': 1e-1, 'iterations': 500, 'bandwidth': 10.0},
            EstimatorType.OSMMD: {'learning_rate': 1e-1, 'iterations': 500, 'bandwidth': 10.0},
            EstimatorType.MLE: {'learning_rate': 1e-1, 'iterations': 500, 'bandwidth': None},
        },
    },
    'gmm': {
        'name': "Symmetric 2-GMM with unknown mean",
        'description': "0.5 N(mu, Sigma) + 0.5 N(-mu, Sigma) with Sigma known.",
        'family': FamilyType.GMM,
        'error_metric': ErrorMetric.MEAN_DISTANCE,
        'success_threshold': 0.02,
        'repeats': 100,
        'estimators': {
            EstimatorType.MMD: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': 10.0},
            EstimatorType.OSMMD: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': 10.0},
            EstimatorType.MLE: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': None},
        },
    },
    'cov': {
        'name': "Gaussian with unknown rank-one covariance",
        'description': "N(0, a a^T + eps^2 I) with eps known.",
        'family': FamilyType.COV,
        'error_metric': ErrorMetric.OUTER_PRODUCT,
        'success_threshold': 0.05,
        'repeats': 100,
        'estimators': {
            EstimatorType.MMD: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': 100.0},
            EstimatorType.OSMMD: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': 10.0},
            EstimatorType.MLE: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': None},
        },
    },
    'gmm-cov': {
        'name': "Symmetric 2-GMM with unknown rank-one covariance",
        'description': "0.5 N(mu, a a^T + eps^2 I) + 0.5 N(-mu, a a^T + eps^2 I) with mu, eps known.",
        'family': FamilyType.GMM_COV,
        'error_metric': ErrorMetric.OUTER_PRODUCT,
        'success_threshold': 0.1,
        'repeats': 200,
        'estimators': {
            EstimatorType.MMD: {'learning_rate': 1e-2, 'iterations': 1000, 'bandwidth': 10.0},
            EstimatorType.OSMMD: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': 10.0},
            EstimatorType.MLE: {'learning_rate': 1e-1, 'iterations': 1000, 'bandwidth': None},
        },
    },
    'cov-epsilon': {
        'name': "Rank-one covariance, MLE vs OSMMD across eps",
        'description': "Same model as 'cov'; settings of the eps comparison.",
        'family': FamilyType.COV,
        'error_metric': ErrorMetric.OUTER_PRODUCT,
        'success_threshold': 0.05,
        'repeats': 100,
        'estimators': {
            EstimatorType.OSMMD: {'learning_rate': 1e1, 'iterations': 5000, 'bandwidth': 1e4},
            EstimatorType.MLE: {'learning_rate': 1e-1, 'iterations': 10000, 'bandwidth': None},
        },
    },
}

# Linear unmixing settings: 256 fakes per epoch, 5000 epochs.
UNMIXING_DEFAULTS: dict[str, float | int] = {
    'dim': 10,
    'rank': 3,
    'n': 100,
    'fakes': 256,
    'epochs': 5000,
    'lr': 1e-2,
    'bandwidth': 1.0,
    'trials': 50,
}

def get_profile(name: str) -> FamilyProfile:
    """Looks up a registry entry, accepting either a profile name or a family tag."""
    try:
        return FAMILY_REGISTRY[name]
    except KeyError:
        raise KeyError(f"Unknown family profile '{name}'. Known: {', '.join(FAMILY_REGISTRY)}") from None
