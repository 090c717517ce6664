# mmdscape/harness.py
"""
Experiment harness: single recovery trials, success-rate sweeps, the linear
unmixing benchmark, landscape profiles, and their CSV / SVG / PDF outputs.

Seed contract: a sweep cell (axis index i, repeat j) runs with the trial seed
derive_seed(master, i, j). The target, the data and the initial point come from
fixed substreams of that seed, so every estimator in a cell sees the same problem.
"""
from __future__ import annotations
import itertools
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeAlias

import fitz
import matplotlib
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from matplotlib.figure import Figure

from .closed_form import ClosedFormObjective
from .estimators import NllObjective, OsmmdObjective, ResampledMmdObjective
from .family_registry import (
    EstimatorType, FamilyProfile, FamilyType, UNMIXING_DEFAULTS, get_profile,
)
from .kernel import KernelConfig
from .models import (
    GaussianFamilyModel, LowRankCovModel, MeanModel, Sample, SymGmmCovModel, SymGmmModel, UnmixingModel,
    derive_rng, derive_seed, family_of, parameter_of, random_unmixing_model, sample,
)
from .optimize import OptimizerConfig, finite_diff_gradient, finite_diff_hessian, run_descent
from .validation import (
    ConfigError, DivergedError, InitError, InvalidArgumentError, LikelihoodUndefinedError, UnsupportedError,
)

logger = logging.getLogger(__name__)

TARGET_STREAM: int = 10
DATA_STREAM: int = 11
INIT_STREAM: int = 12
BASELINE_STREAM: int = 13

MAX_PERMUTATION_RANK: int = 8
SWEEP_AXES: tuple[str, ...] = ('m', 'epsilon')
UNMIXING_METHODS: tuple[str, ...] = ('mmd', 'vca', 'random')

PLOT_SIZE_INCHES: tuple[float, float] = (800 / 72, 600 / 72)
SVG_HASH_SALT: str = 'mmdscape'

# ===================================================================
# 1. TARGETS AND ERROR METRICS
# ===================================================================

def make_target(family: FamilyType, dim: int, epsilon: float, rng: np.random.Generator) -> GaussianFamilyModel:
    """Ground truth with standard-normal parameters and identity Sigma."""
    if dim < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}.")
    eye = np.eye(dim)
    match family:
        case FamilyType.MEAN:
            return MeanModel(mu=rng.standard_normal(dim), sigma_cov=eye)
        case FamilyType.GMM:
            return SymGmmModel(mu=rng.standard_normal(dim), sigma_cov=eye)
        case FamilyType.COV:
            return LowRankCovModel(a=rng.standard_normal(dim), epsilon=epsilon)
        case FamilyType.GMM_COV:
            a = rng.standard_normal(dim)
            return SymGmmCovModel(a=a, mu=rng.standard_normal(dim), epsilon=epsilon)
    raise UnsupportedError(f"No target generator for family {family}.")

def error_metric(model_star: GaussianFamilyModel, theta: np.ndarray) -> float:
    """|mu - mu*| / d (up to sign for mixtures) or |a a^T - a* a*^T|_F / d."""
    theta = np.asarray(theta, dtype=np.float64)
    d = model_star.dim
    match model_star:
        case MeanModel():
            return float(np.linalg.norm(theta - model_star.mu) / d)
        case SymGmmModel():
            return float(min(np.linalg.norm(theta - model_star.mu), np.linalg.norm(theta + model_star.mu)) / d)
        case LowRankCovModel() | SymGmmCovModel():
            return float(np.linalg.norm(np.outer(theta, theta) - np.outer(model_star.a, model_star.a)) / d)
    raise UnsupportedError(f"No error metric for {type(model_star).__name__}.")

# ===================================================================
# 2. RECOVERY TRIALS
# ===================================================================

@dataclass(frozen=True, eq=False)
class TrialReport:
    estimator: EstimatorType
    family: FamilyType
    m: int
    n: int | None
    seed: int
    final_param: np.ndarray
    error_metric: float
    success: bool
    wall_time: float
    failure: str | None = None

def resolve_settings(
    profile: FamilyProfile,
    estimator: EstimatorType,
    lr: float | None = None,
    iters: int | None = None,
    bandwidth: float | None = None,
    method: str = 'adam',
) -> tuple[OptimizerConfig, KernelConfig | None]:
    """Registry settings for one estimator with the explicit overrides applied."""
    settings = profile['estimators'].get(estimator)
    if settings is None:
        raise ConfigError(f"Profile '{profile['name']}' has no settings for {estimator.value}.", field='estimators')
    opt = OptimizerConfig(
        method=method,
        learning_rate=lr if lr is not None else settings['learning_rate'],
        iterations=iters if iters is not None else settings['iterations'],
    )
    if estimator is EstimatorType.MLE:
        return opt, None
    width = bandwidth if bandwidth is not None else settings['bandwidth']
    return opt, KernelConfig(bandwidth=width)

def recovery_trial(
    model_star: GaussianFamilyModel,
    estimator: EstimatorType,
    m: int,
    n: int | None,
    opt: OptimizerConfig,
    cfg: KernelConfig | None,
    seed: int,
    init: np.ndarray | None = None,
    threshold: float | None = None,
) -> TrialReport:
    """
    Draws m data points from model_star, fits the estimator from `init` (a
    standard-normal draw when omitted) and scores the final parameter. Divergence
    and an undefined likelihood count as failures with an infinite error.
    """
    family = family_of(model_star)
    if family is None:
        raise UnsupportedError("Recovery trials need a Gaussian-family model.")
    if m < 2:
        raise InvalidArgumentError(f"m must be >= 2, got {m}.")
    if estimator is not EstimatorType.MLE and cfg is None:
        raise InvalidArgumentError(f"{estimator.value} needs a kernel bandwidth.")
    if threshold is None:
        threshold = get_profile(family.value)['success_threshold']

    data = sample(model_star, m, derive_seed(seed, DATA_STREAM))
    if init is None:
        init = derive_rng(seed, INIT_STREAM).standard_normal(model_star.dim)
    init = np.asarray(init, dtype=np.float64)

    start = time.perf_counter()
    failure = None
    try:
        match estimator:
            case EstimatorType.MMD:
                if n is None or n < 2:
                    raise InvalidArgumentError(f"The empirical MMD needs n >= 2 fakes, got {n}.")
                objective = ResampledMmdObjective(model_star, data, cfg, n=n, seed=seed)
                trajectory = run_descent(objective, init, opt, stepped=True)
            case EstimatorType.OSMMD:
                trajectory = run_descent(OsmmdObjective(model_star, data, cfg), init, opt)
            case EstimatorType.MLE:
                trajectory = run_descent(NllObjective(model_star, data), init, opt)
            case _:
                raise UnsupportedError(f"Unknown estimator {estimator}.")
        final = trajectory.final.theta
        error = error_metric(model_star, final)
    except (DivergedError, LikelihoodUndefinedError) as e:
        logger.warning(f"{estimator.value} trial (seed {seed}) failed: {e}")
        failure = str(e)
        final = np.full(model_star.dim, np.nan)
        error = math.inf
    elapsed = time.perf_counter() - start

    success = bool(error <= threshold)
    logger.debug(f"{family.value}/{estimator.value} m={m} seed={seed}: error {error:.4g}, success={success}")
    return TrialReport(
        estimator=estimator, family=family, m=m, n=n if estimator is EstimatorType.MMD else None,
        seed=seed, final_param=final, error_metric=error, success=success,
        wall_time=elapsed, failure=failure,
    )

@dataclass(eq=False)
class RecoveryReport:
    trials: list[TrialReport] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    'trial': i,
                    'estimator': t.estimator.value,
                    'error_metric': t.error_metric,
                    'success': t.success,
                    'seconds': t.wall_time,
                }
                for i, t in enumerate(self.trials)
            ],
            columns=['trial', 'estimator', 'error_metric', 'success', 'seconds'],
        )

# ===================================================================
# 3. SUCCESS-RATE SWEEPS
# ===================================================================

@dataclass(frozen=True)
class SweepConfig:
    profile: str
    dim: int
    axis: str
    axis_values: tuple[float, ...]
    estimators: tuple[EstimatorType, ...]
    repeats: int
    seed: int
    m: int = 1000
    n: int | None = None
    epsilon: float = 0.0
    bandwidth: float | None = None
    lr: float | None = None
    iters: int | None = None
    method: str = 'adam'

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}.", field='repeats')
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {', '.join(SWEEP_AXES)}, got '{self.axis}'.", field='axis')
        if not self.axis_values:
            raise ConfigError("axis_values must not be empty.", field='axis_values')
        if not self.estimators:
            raise ConfigError("estimators must not be empty.", field='estimators')
        object.__setattr__(self, 'axis_values', tuple(self.axis_values))
        object.__setattr__(self, 'estimators', tuple(EstimatorType(e) for e in self.estimators))

@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    estimator: EstimatorType
    repeats: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.repeats

    @property
    def half_width(self) -> float:
        """Normal-approximation 95% half-width."""
        p = self.rate
        return 1.96 * math.sqrt(p * (1.0 - p) / self.repeats)

SWEEP_COLUMNS: list[str] = ['axis_name', 'axis_value', 'estimator', 'repeats', 'successes', 'rate', 'half_width']

@dataclass(eq=False)
class SweepReport:
    axis_name: str
    points: list[SweepPoint] = field(default_factory=list)
    trials: list[TrialReport] = field(default_factory=list)

    @property
    def estimators(self) -> list[EstimatorType]:
        return list(dict.fromkeys(point.estimator for point in self.points))

    def series(self, estimator: EstimatorType) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(axis values, rates, half-widths) of one estimator, in axis order."""
        points = [p for p in self.points if p.estimator is estimator]
        return (
            np.array([p.axis_value for p in points]),
            np.array([p.rate for p in points]),
            np.array([p.half_width for p in points]),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                [self.axis_name, p.axis_value, p.estimator.value, p.repeats, p.successes, p.rate, p.half_width]
                for p in self.points
            ],
            columns=SWEEP_COLUMNS,
        )

def _sweep_cell(config: SweepConfig, axis_index: int, repeat: int) -> list[TrialReport]:
    profile = get_profile(config.profile)
    value = config.axis_values[axis_index]
    trial_seed = derive_seed(config.seed, axis_index, repeat)
    epsilon = float(value) if config.axis == 'epsilon' else config.epsilon
    m = int(value) if config.axis == 'm' else config.m
    n = config.n if config.n is not None else m
    model_star = make_target(profile['family'], config.dim, epsilon, derive_rng(trial_seed, TARGET_STREAM))

    reports = []
    for estimator in config.estimators:
        opt, cfg = resolve_settings(profile, estimator, config.lr, config.iters, config.bandwidth, config.method)
        reports.append(
            recovery_trial(model_star, estimator, m, n, opt, cfg, trial_seed, threshold=profile['success_threshold'])
        )
    return reports

def success_sweep(config: SweepConfig, n_jobs: int = 1) -> SweepReport:
    """
    Runs `repeats` trials per axis value and estimator. Cells run in parallel;
    results are reduced in (axis value, estimator, repeat) order.
    """
    profile = get_profile(config.profile)
    for estimator in config.estimators:
        if estimator not in profile['estimators']:
            raise ConfigError(f"Profile '{config.profile}' has no settings for {estimator.value}.", field='estimators')
    logger.info(
        f"Sweep over {config.axis} = {list(config.axis_values)} for {config.profile}, "
        f"{config.repeats} repeats, estimators {[e.value for e in config.estimators]}"
    )
    cells = [(i, j) for i in range(len(config.axis_values)) for j in range(config.repeats)]
    results = Parallel(n_jobs=n_jobs)(delayed(_sweep_cell)(config, i, j) for i, j in cells)

    report = SweepReport(axis_name=config.axis)
    for i, value in enumerate(config.axis_values):
        cell_results = [results[k] for k, (ci, _) in enumerate(cells) if ci == i]
        for e_index, estimator in enumerate(config.estimators):
            trials = [cell[e_index] for cell in cell_results]
            report.trials.extend(trials)
            point = SweepPoint(
                axis_value=value, estimator=estimator, repeats=config.repeats,
                successes=sum(t.success for t in trials),
            )
            report.points.append(point)
            logger.info(f"{config.axis}={value} {estimator.value}: rate {point.rate:.3f} (+-{point.half_width:.3f})")
    return report

def load_sweep_csv(path: Path) -> SweepReport:
    """Parses a results.csv written for a sweep back into a SweepReport."""
    frame = pd.read_csv(Path(path))
    missing = set(SWEEP_COLUMNS) - set(frame.columns)
    if missing:
        raise ConfigError(f"{path} is not a sweep result; missing columns {sorted(missing)}.")
    axis_name = str(frame['axis_name'].iloc[0]) if len(frame) else 'm'
    points = [
        SweepPoint(
            axis_value=float(row.axis_value), estimator=EstimatorType(row.estimator),
            repeats=int(row.repeats), successes=int(row.successes),
        )
        for row in frame.itertuples(index=False)
    ]
    return SweepReport(axis_name=axis_name, points=points)

# ===================================================================
# 4. LINEAR UNMIXING
# ===================================================================

def vca_init(x: Sample, r: int, seed: int) -> np.ndarray:
    """
    Simplified vertex component analysis. Projects the data on its top-r
    (uncentered) singular subspace, then picks r extreme points, each maximizing
    |f^T x| for a random direction f orthogonal to the vertices already picked.
    Returns the selected data points as the columns of a d x r matrix.
    """
    if r < 1:
        raise InvalidArgumentError(f"r must be >= 1, got {r}.")
    if x.count < r:
        raise InitError(f"Need at least r={r} points, got {x.count}.")
    points = x.points
    rng = derive_rng(seed)

    if r == 1:
        centered = points - points.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        idx = int(np.argmax(np.abs(centered @ vt[0])))
        return points[idx][:, None].copy()

    _, singular, vt = np.linalg.svd(points, full_matrices=False)
    if singular.size < r or singular[r - 1] <= 1e-12 * singular[0]:
        raise InitError(f"Data has rank below r={r}.")
    projected = points @ vt[:r].T

    selected: list[int] = []
    for _ in range(r):
        direction = rng.standard_normal(r)
        if selected:
            basis, _ = np.linalg.qr(projected[selected].T)
            direction -= basis @ (basis.T @ direction)
        direction /= np.linalg.norm(direction)
        scores = np.abs(projected @ direction)
        scores[selected] = -np.inf
        selected.append(int(np.argmax(scores)))

    if np.linalg.matrix_rank(projected[selected]) < r:
        raise InitError(f"Selected vertices span fewer than r={r} dimensions.")
    logger.debug(f"VCA picked rows {selected}")
    return points[selected].T.copy()

def permutation_distance(a_hat: np.ndarray, a_star: np.ndarray) -> float:
    """min over column permutations pi of sum_i |a_hat_i - a*_pi(i)|^2."""
    a_hat = np.asarray(a_hat, dtype=np.float64)
    a_star = np.asarray(a_star, dtype=np.float64)
    if a_hat.shape != a_star.shape or a_hat.ndim != 2:
        raise InvalidArgumentError(f"Shape mismatch: {a_hat.shape} vs {a_star.shape}.")
    r = a_hat.shape[1]
    if r > MAX_PERMUTATION_RANK:
        raise UnsupportedError(f"Permutation enumeration supports r <= {MAX_PERMUTATION_RANK}, got {r}.")
    # cost[i, j] = |a_hat_i - a*_j|^2
    cost = np.sum((a_hat[:, :, None] - a_star[:, None, :]) ** 2, axis=0)
    columns = np.arange(r)
    return float(min(cost[columns, list(perm)].sum() for perm in itertools.permutations(range(r))))

@dataclass(frozen=True)
class UnmixingRow:
    noise_var: float
    method: str
    mean_dist: float
    std_dist: float
    trials: int

@dataclass(eq=False)
class UnmixingReport:
    rows: list[UnmixingRow] = field(default_factory=list)
    # (noise_var, method) -> per-trial distances
    distances: dict[tuple[float, str], np.ndarray] = field(default_factory=dict)

    def row(self, noise_var: float, method: str) -> UnmixingRow:
        for row in self.rows:
            if row.noise_var == noise_var and row.method == method:
                return row
        raise KeyError(f"No row for noise_var={noise_var}, method={method}.")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.noise_var, r.method, r.mean_dist, r.std_dist, r.trials] for r in self.rows],
            columns=['noise_var', 'method', 'mean_dist', 'std_dist', 'trials'],
        )

def _unmixing_trial(
    noise_var: float, methods: tuple[str, ...], trial_seed: int, dim: int, rank: int, n: int,
    fakes: int, epochs: int, lr: float, bandwidth: float,
) -> dict[str, float]:
    model_star = random_unmixing_model(dim, rank, noise_var, derive_rng(trial_seed, TARGET_STREAM))
    data = sample(model_star, n, derive_seed(trial_seed, DATA_STREAM))
    a_vca = vca_init(data, rank, derive_seed(trial_seed, INIT_STREAM))

    distances: dict[str, float] = {}
    if 'vca' in methods:
        distances['vca'] = permutation_distance(a_vca, model_star.a_matrix)
    if 'random' in methods:
        a_random = derive_rng(trial_seed, BASELINE_STREAM).standard_normal((dim, rank))
        distances['random'] = permutation_distance(a_random, model_star.a_matrix)
    if 'mmd' in methods:
        template = UnmixingModel(a_matrix=a_vca, noise_var=noise_var)
        objective = ResampledMmdObjective(template, data, KernelConfig(bandwidth), n=fakes, seed=trial_seed)
        opt = OptimizerConfig(method='adam', learning_rate=lr, iterations=epochs)
        try:
            trajectory = run_descent(objective, parameter_of(template), opt, stepped=True)
            a_hat = trajectory.final.theta.reshape(dim, rank)
            distances['mmd'] = permutation_distance(a_hat, model_star.a_matrix)
        except DivergedError as e:
            logger.warning(f"Unmixing trial (seed {trial_seed}) diverged: {e}")
            distances['mmd'] = math.inf
    return distances

def unmixing_experiment(
    noise_var: float | Sequence[float],
    trials: int,
    methods: Sequence[str] = ('mmd',),
    seed: int = 0,
    dim: int = int(UNMIXING_DEFAULTS['dim']),
    rank: int = int(UNMIXING_DEFAULTS['rank']),
    n: int = int(UNMIXING_DEFAULTS['n']),
    fakes: int = int(UNMIXING_DEFAULTS['fakes']),
    epochs: int = int(UNMIXING_DEFAULTS['epochs']),
    lr: float = float(UNMIXING_DEFAULTS['lr']),
    bandwidth: float = float(UNMIXING_DEFAULTS['bandwidth']),
    n_jobs: int = 1,
) -> UnmixingReport:
    """
    Per trial: draw A* with standard-normal entries, sample n points, initialize
    with VCA and fit A by empirical MMD with `fakes` fresh fakes per epoch.
    Reports mean and sample std (n - 1 denominator) of the permutation distance.
    """
    noise_vars = [float(noise_var)] if np.isscalar(noise_var) else [float(v) for v in noise_var]
    methods = tuple(dict.fromkeys(methods))
    unknown = set(methods) - set(UNMIXING_METHODS)
    if unknown:
        raise UnsupportedError(f"Unknown unmixing methods {sorted(unknown)}; use {', '.join(UNMIXING_METHODS)}.")
    if trials < 2:
        raise InvalidArgumentError(f"trials must be >= 2 for a sample std, got {trials}.")

    report = UnmixingReport()
    for v_index, variance in enumerate(noise_vars):
        logger.info(f"Unmixing: noise_var={variance}, {trials} trials, methods {list(methods)}")
        results = Parallel(n_jobs=n_jobs)(
            delayed(_unmixing_trial)(
                variance, methods, derive_seed(seed, v_index, t), dim, rank, n, fakes, epochs, lr, bandwidth,
            )
            for t in range(trials)
        )
        for method in methods:
            dists = np.array([res[method] for res in results])
            report.distances[(variance, method)] = dists
            row = UnmixingRow(
                noise_var=variance, method=method, mean_dist=float(dists.mean()),
                std_dist=float(dists.std(ddof=1)), trials=trials,
            )
            report.rows.append(row)
            logger.info(f"noise_var={variance} {method}: {row.mean_dist:.3f} ({row.std_dist:.3f})")
    return report

# ===================================================================
# 5. LANDSCAPE PROFILES
# ===================================================================

@dataclass(eq=False)
class ProfileReport:
    """Closed-form MMD along theta(t) = t * direction, one curve per bandwidth."""
    family: FamilyType
    frame: pd.DataFrame

def landscape_profile(
    model_star: MeanModel | LowRankCovModel | SymGmmModel,
    bandwidths: Sequence[float],
    direction: np.ndarray | None = None,
    radius: float = 5.0,
    points: int = 201,
) -> ProfileReport:
    """
    Evaluates the population MMD on a 1-D grid t in [-radius, radius] along
    `direction` (unit-normalized; defaults to theta*) for each bandwidth.
    """
    if points < 2:
        raise InvalidArgumentError(f"points must be >= 2, got {points}.")
    direction = parameter_of(model_star) if direction is None else np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise InvalidArgumentError("direction must be non-zero.")
    direction = direction / norm
    grid = np.linspace(-radius, radius, points)

    rows = []
    for bandwidth in bandwidths:
        objective = ClosedFormObjective(model_star, KernelConfig(bandwidth))
        for t in grid:
            rows.append([float(bandwidth), float(t), objective.evaluate(t * direction).value])
    frame = pd.DataFrame(rows, columns=['bandwidth', 't', 'value'])
    return ProfileReport(family=family_of(model_star), frame=frame)

# ===================================================================
# 6. GRADIENT CHECKS
# ===================================================================

GRADIENT_RTOL: float = 1e-5
HESSIAN_RTOL: float = 1e-4

def relative_error(actual: np.ndarray, expected: np.ndarray, floor: float = 1e-8) -> float:
    """|actual - expected| / max(|actual|, |expected|, floor); Frobenius for matrices."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(np.linalg.norm(actual), np.linalg.norm(expected), floor)
    return float(np.linalg.norm(actual - expected) / scale)

def run_gradient_checks(
    family: FamilyType, dim: int, cfg: KernelConfig, epsilon: float, checks: int, seed: int, m: int = 50,
) -> pd.DataFrame:
    """
    Analytic gradients (and closed-form Hessians) against central finite
    differences at `checks` random (target, parameter) pairs.
    """
    rng = derive_rng(seed)
    rows = []

    def record(check: str, index: int, error: float, tol: float) -> None:
        rows.append({'check': check, 'point': index, 'rel_error': error, 'tolerance': tol, 'passed': error <= tol})

    for i in range(checks):
        model_star = make_target(family, dim, epsilon, rng)
        theta = rng.standard_normal(dim)
        if family is not FamilyType.GMM_COV:
            closed = ClosedFormObjective(model_star, cfg)
            result = closed.evaluate(theta, hessian=True)
            fd_grad = finite_diff_gradient(lambda t: closed.evaluate(t).value, theta)
            record('closed-form gradient', i, relative_error(result.gradient, fd_grad), GRADIENT_RTOL)
            fd_hess = finite_diff_hessian(lambda t: closed.evaluate(t).gradient, theta)
            record('closed-form hessian', i, relative_error(result.hessian, fd_hess), HESSIAN_RTOL)

        data = sample(model_star, m, derive_seed(seed, i))
        one_sided = OsmmdObjective(model_star, data, cfg)
        fd_grad = finite_diff_gradient(lambda t: one_sided.evaluate(t).value, theta)
        record('osmmd gradient', i, relative_error(one_sided.evaluate(theta).gradient, fd_grad), GRADIENT_RTOL)

        if family in (FamilyType.COV, FamilyType.GMM_COV) and epsilon == 0.0:
            continue
        likelihood = NllObjective(model_star, data)
        fd_grad = finite_diff_gradient(lambda t: likelihood.evaluate(t).value, theta)
        record('nll gradient', i, relative_error(likelihood.evaluate(theta).gradient, fd_grad), GRADIENT_RTOL)

    frame = pd.DataFrame(rows, columns=['check', 'point', 'rel_error', 'tolerance', 'passed'])
    failed = int((~frame['passed']).sum()) if len(frame) else 0
    if failed:
        logger.warning(f"{failed}/{len(frame)} gradient checks exceeded their tolerance")
    else:
        logger.info(f"All {len(frame)} gradient checks passed")
    return frame

# ===================================================================
# 7. OUTPUTS
# ===================================================================

Report: TypeAlias = SweepReport | RecoveryReport | UnmixingReport | ProfileReport

def _report_frame(report: Report) -> pd.DataFrame:
    if isinstance(report, ProfileReport):
        return report.frame
    return report.to_frame()

def _new_figure() -> tuple[Figure, Any]:
    fig = Figure(figsize=PLOT_SIZE_INCHES, dpi=72)
    return fig, fig.add_subplot(1, 1, 1)

def _draw_sweep(report: SweepReport, ax: Any) -> None:
    values = np.array([p.axis_value for p in report.points], dtype=np.float64)
    for estimator in report.estimators:
        xs, rates, half_widths = report.series(estimator)
        ax.errorbar(xs, rates, yerr=half_widths, marker='o', capsize=3, label=estimator.value)
    positive = values[values > 0]
    if positive.size and positive.max() / positive.min() >= 100.0:
        ax.set_xscale('log')
    ax.set_xlabel(report.axis_name)
    ax.set_ylabel('success rate')
    ax.set_ylim(-0.05, 1.05)
    ax.legend()

def _draw_recovery(report: RecoveryReport, ax: Any) -> None:
    frame = report.to_frame()
    finite = frame[np.isfinite(frame['error_metric'])]
    ax.bar(finite['trial'].astype(str) + ':' + finite['estimator'], finite['error_metric'])
    ax.set_yscale('log')
    ax.set_xlabel('trial:estimator')
    ax.set_ylabel('error metric')

def _draw_unmixing(report: UnmixingReport, ax: Any) -> None:
    frame = report.to_frame()
    labels = frame['method'] + ' @ ' + frame['noise_var'].astype(str)
    ax.bar(labels, frame['mean_dist'], yerr=frame['std_dist'], capsize=4)
    ax.set_xlabel('method @ noise variance')
    ax.set_ylabel('mean permutation distance')

def _draw_profile(report: ProfileReport, ax: Any) -> None:
    for bandwidth, curve in report.frame.groupby('bandwidth', sort=True):
        ax.plot(curve['t'], curve['value'], label=f"bandwidth {bandwidth:g}")
    ax.set_xlabel('t')
    ax.set_ylabel('MMD')
    ax.legend()

def _render_svg(report: Report, path: Path) -> None:
    fig, ax = _new_figure()
    match report:
        case SweepReport():
            _draw_sweep(report, ax)
        case RecoveryReport():
            _draw_recovery(report, ax)
        case UnmixingReport():
            _draw_unmixing(report, ax)
        case ProfileReport():
            _draw_profile(report, ax)
    fig.tight_layout()
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'path'}):
        fig.savefig(path, format='svg', metadata={'Date': None})

def _render_pdf(frame: pd.DataFrame, svg_path: Path | None, path: Path) -> None:
    """Plot page (when there is a plot) followed by the results table."""
    if svg_path is not None:
        with fitz.open(svg_path) as svg_doc:
            doc = fitz.open(stream=svg_doc.convert_to_pdf(), filetype='pdf')
    else:
        doc = fitz.open()
    page = doc.new_page()
    lines = frame.to_string(index=False).splitlines() or ['(no rows)']
    y_pos, line_height = 50.0, 12.0
    for line in lines:
        if y_pos > page.rect.height - 40:
            page = doc.new_page()
            y_pos = 50.0
        page.insert_text(fitz.Point(40, y_pos), line, fontname='cour', fontsize=8)
        y_pos += line_height
    doc.save(path, garbage=4, deflate=True, clean=True)
    doc.close()

def emit_outputs(report: Report, out_dir: Path, pdf: bool = False) -> list[Path]:
    """
    Writes results.csv and plot.svg (and report.pdf on request) into out_dir,
    overwriting earlier runs. An empty report yields a header-only CSV and
    removes any plot left by an earlier run.
    """
    out_dir = Path(out_dir)
    written: list[Path] = []
    csv_path = out_dir / 'results.csv'
    svg_path = out_dir / 'plot.svg'
    frame = _report_frame(report)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(csv_path, index=False, lineterminator='\n', encoding='utf-8')
        written.append(csv_path)
        if frame.empty:
            svg_path.unlink(missing_ok=True)
            logger.warning(f"Empty report; no plot at {svg_path}")
            plotted = None
        else:
            _render_svg(report, svg_path)
            written.append(svg_path)
            plotted = svg_path
        if pdf:
            pdf_path = out_dir / 'report.pdf'
            _render_pdf(frame, plotted, pdf_path)
            written.append(pdf_path)
    except OSError as e:
        raise OSError(f"Could not write outputs to {out_dir}: {e}") from e
    for path in written:
        logger.info(f"Wrote {path}")
    return written
