# mmdscape/command_definitions.py
from __future__ import annotations
from .family_registry import FAMILY_REGISTRY
from .utils import ALL_FAMILIES, CLOSED_FORM_FAMILIES, ESTIMATOR_TAGS, CommandDefinition, ExperimentSchema, FieldConfig
from .validation import (
    required, is_positive, is_non_negative, is_int_at_least,
    is_one_of, is_subset_of, is_at_least_field,
)

S = ExperimentSchema

def _seed() -> FieldConfig:
    return {'field': S.SEED, 'validators': [required("A seed is required."), is_int_at_least(0, "Seed must be >= 0.")]}

def _out() -> FieldConfig:
    return {'field': S.OUT, 'validators': [required("An output directory is required.")]}

COMMANDS_BY_NAME: dict[str, CommandDefinition] = {
    'check-grad': {
        'name': 'check-grad', 'title': 'Gradient checks',
        'description': 'Compares analytic gradients and Hessians against central finite differences.',
        'fields': [
            {'field': S.FAMILY, 'validators': [
                required("Choose a family."),
                is_one_of(ALL_FAMILIES, f"Family must be one of {', '.join(ALL_FAMILIES)}."),
            ]},
            {'field': S.DIM, 'validators': [required("Dimension is required."), is_int_at_least(1, "Dimension must be >= 1.")]},
            {'field': S.BANDWIDTH, 'validators': [required("Bandwidth is required."), is_positive("Bandwidth must be > 0.")]},
            {'field': S.EPSILON, 'validators': [is_non_negative("Epsilon must be >= 0.")]},
            {'field': S.M, 'validators': [is_int_at_least(2, "m must be >= 2.")]},
            {'field': S.CHECKS, 'validators': [is_int_at_least(1, "Need at least one check point.")]},
            _seed(),
        ],
        'defaults': {'bandwidth': 1.0, 'epsilon': 0.5, 'm': 50},
    },
    'landscape': {
        'name': 'landscape', 'title': 'Landscape scan',
        'description': 'Finds and classifies the critical points of a closed-form objective.',
        'fields': [
            {'field': S.FAMILY, 'validators': [
                required("Choose a family."),
                is_one_of(CLOSED_FORM_FAMILIES, f"Family must be one of {', '.join(CLOSED_FORM_FAMILIES)}."),
            ]},
            {'field': S.DIM, 'validators': [required("Dimension is required."), is_int_at_least(1, "Dimension must be >= 1.")]},
            {'field': S.BANDWIDTH, 'validators': [required("Bandwidth is required."), is_positive("Bandwidth must be > 0.")]},
            {'field': S.EPSILON, 'validators': [is_non_negative("Epsilon must be >= 0.")]},
            {'field': S.STARTS, 'validators': [is_int_at_least(1, "Need at least one start.")]},
            {'field': S.RADIUS, 'validators': [is_positive("Radius must be > 0.")]},
            _seed(),
            _out(),
        ],
        'defaults': {'bandwidth': 1.0},
    },
    'recover': {
        'name': 'recover', 'title': 'Recovery trial',
        'description': 'One recovery trial per estimator on a shared target and data set.',
        'fields': [
            {'field': S.FAMILY, 'validators': [
                required("Choose a family."),
                is_one_of(list(FAMILY_REGISTRY), f"Family must be one of {', '.join(FAMILY_REGISTRY)}."),
            ]},
            {'field': S.DIM, 'validators': [required("Dimension is required."), is_int_at_least(1, "Dimension must be >= 1.")]},
            {'field': S.ESTIMATORS, 'validators': [
                required("Choose at least one estimator."),
                is_subset_of(ESTIMATOR_TAGS, f"Estimators must be among {', '.join(ESTIMATOR_TAGS)}."),
            ]},
            {'field': S.M, 'validators': [required("m is required."), is_int_at_least(2, "m must be >= 2.")]},
            {'field': S.N, 'validators': [is_int_at_least(2, "n must be >= 2.")]},
            {'field': S.EPSILON, 'validators': [is_non_negative("Epsilon must be >= 0.")]},
            {'field': S.BANDWIDTH, 'validators': [is_positive("Bandwidth must be > 0.")]},
            {'field': S.LR, 'validators': [is_positive("Learning rate must be > 0.")]},
            {'field': S.ITERS, 'validators': [is_int_at_least(1, "Iterations must be >= 1.")]},
            {'field': S.METHOD, 'validators': [is_one_of(['adam', 'gd'], "Optimizer must be 'adam' or 'gd'.")]},
            _seed(),
            _out(),
            {'field': S.PDF, 'validators': []},
        ],
        'defaults': {'dim': 16},
    },
    'sweep': {
        'name': 'sweep', 'title': 'Success-rate sweep',
        'description': 'Success rate per estimator along an m or eps axis.',
        'fields': [
            {'field': S.FAMILY, 'validators': [
                required("Choose a family."),
                is_one_of(list(FAMILY_REGISTRY), f"Family must be one of {', '.join(FAMILY_REGISTRY)}."),
            ]},
            {'field': S.DIM, 'validators': [required("Dimension is required."), is_int_at_least(1, "Dimension must be >= 1.")]},
            {'field': S.ESTIMATORS, 'validators': [
                required("Choose at least one estimator."),
                is_subset_of(ESTIMATOR_TAGS, f"Estimators must be among {', '.join(ESTIMATOR_TAGS)}."),
            ]},
            {'field': S.AXIS, 'validators': [required("Choose an axis."), is_one_of(['m', 'epsilon'], "Axis must be 'm' or 'epsilon'.")]},
            {'field': S.AXIS_VALUES, 'validators': [
                required("Give at least one axis value."),
                is_non_negative("Axis values must be >= 0."),
            ]},
            {'field': S.REPEATS, 'validators': [required("Repeats are required."), is_int_at_least(1, "Repeats must be >= 1.")]},
            {'field': S.M, 'validators': [is_int_at_least(2, "m must be >= 2.")]},
            {'field': S.N, 'validators': [is_int_at_least(2, "n must be >= 2.")]},
            {'field': S.EPSILON, 'validators': [is_non_negative("Epsilon must be >= 0.")]},
            {'field': S.BANDWIDTH, 'validators': [is_positive("Bandwidth must be > 0.")]},
            {'field': S.LR, 'validators': [is_positive("Learning rate must be > 0.")]},
            {'field': S.ITERS, 'validators': [is_int_at_least(1, "Iterations must be >= 1.")]},
            {'field': S.METHOD, 'validators': [is_one_of(['adam', 'gd'], "Optimizer must be 'adam' or 'gd'.")]},
            _seed(),
            _out(),
            {'field': S.N_JOBS, 'validators': [is_int_at_least(1, "n_jobs must be >= 1.")]},
            {'field': S.PDF, 'validators': []},
        ],
        'defaults': {'dim': 16},
    },
    'unmix': {
        'name': 'unmix', 'title': 'Linear unmixing',
        'description': 'Endmember recovery by empirical MMD from a VCA start.',
        'fields': [
            {'field': S.DIM, 'validators': [
                required("Dimension is required."),
                is_int_at_least(1, "Dimension must be >= 1."),
                is_at_least_field('rank', "Dimension must be >= rank."),
            ]},
            {'field': S.RANK, 'validators': [required("Rank is required."), is_int_at_least(2, "Rank must be >= 2.")]},
            {'field': S.N, 'validators': [required("n is required."), is_int_at_least(2, "n must be >= 2.")]},
            {'field': S.NOISE_VAR, 'validators': [required("Give at least one noise variance."), is_non_negative("Noise variance must be >= 0.")]},
            {'field': S.TRIALS, 'validators': [required("Trials are required."), is_int_at_least(2, "Trials must be >= 2.")]},
            {'field': S.METHODS, 'validators': [
                required("Choose at least one method."),
                is_subset_of(['mmd', 'vca', 'random'], "Methods must be among mmd, vca, random."),
            ]},
            {'field': S.FAKES, 'validators': [is_int_at_least(2, "Fakes must be >= 2.")]},
            {'field': S.EPOCHS, 'validators': [is_int_at_least(1, "Epochs must be >= 1.")]},
            {'field': S.LR, 'validators': [is_positive("Learning rate must be > 0.")]},
            {'field': S.BANDWIDTH, 'validators': [is_positive("Bandwidth must be > 0.")]},
            _seed(),
            _out(),
            {'field': S.N_JOBS, 'validators': [is_int_at_least(1, "n_jobs must be >= 1.")]},
            {'field': S.PDF, 'validators': []},
        ],
        'defaults': {'dim': 10, 'n': 100},
    },
    'profile': {
        'name': 'profile', 'title': 'Landscape profile',
        'description': 'Closed-form MMD along a line through the target, for several bandwidths.',
        'fields': [
            {'field': S.FAMILY, 'validators': [
                required("Choose a family."),
                is_one_of(CLOSED_FORM_FAMILIES, f"Family must be one of {', '.join(CLOSED_FORM_FAMILIES)}."),
            ]},
            {'field': S.DIM, 'validators': [required("Dimension is required."), is_int_at_least(1, "Dimension must be >= 1.")]},
            {'field': S.BANDWIDTHS, 'validators': [required("Give at least one bandwidth."), is_positive("Bandwidths must be > 0.")]},
            {'field': S.EPSILON, 'validators': [is_non_negative("Epsilon must be >= 0.")]},
            {'field': S.RADIUS, 'validators': [is_positive("Radius must be > 0.")]},
            {'field': S.POINTS, 'validators': [is_int_at_least(2, "Need at least two grid points.")]},
            _seed(),
            _out(),
            {'field': S.PDF, 'validators': []},
        ],
        'defaults': {'dim': 1, 'radius': 5.0},
    },
}
