# mmdscape/utils.py
from __future__ import annotations
import os
import sys
from typing import Any

if sys.version_info >= (3, 11):
    from typing import NotRequired, TypedDict
else:
    from typing_extensions import NotRequired, TypedDict
from dataclasses import dataclass

from .family_registry import FAMILY_REGISTRY, UNMIXING_DEFAULTS, EstimatorType, FamilyType
from .validation import ConfigError, ValidatorFunc

# ===================================================================
# 1. CORE DATA STRUCTURES & TYPE ALIASES
# ===================================================================

_TRUE_WORDS = {'1', 'true', 'yes', 'on'}
_FALSE_WORDS = {'0', 'false', 'no', 'off'}

@dataclass(frozen=True)
class ConfigField:
    """Defines everything about one configuration key in one place."""
    key: str
    label: str
    value_type: type = str
    default_value: Any = None
    options: list[str] | None = None
    # List-valued: comma separated on the command line, a JSON array in files.
    multiple: bool = False
    ui_type: str = 'number'

    @property
    def flag(self) -> str:
        return '--' + self.key.replace('_', '-')

    def _coerce_one(self, raw: Any) -> Any:
        if self.value_type is bool:
            if isinstance(raw, bool):
                return raw
            word = str(raw).strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ConfigError(f"Expected a boolean, got '{raw}'.", field=self.key)
        if self.value_type is int:
            if isinstance(raw, bool):
                raise ConfigError(f"Expected an integer, got {raw}.", field=self.key)
            if isinstance(raw, float):
                if not raw.is_integer():
                    raise ConfigError(f"Expected an integer, got {raw}.", field=self.key)
                return int(raw)
            try:
                return int(str(raw).strip())
            except ValueError:
                # accept '1e3'
                try:
                    number = float(str(raw).strip())
                except ValueError:
                    raise ConfigError(f"Expected an integer, got '{raw}'.", field=self.key) from None
                if not number.is_integer():
                    raise ConfigError(f"Expected an integer, got '{raw}'.", field=self.key)
                return int(number)
        if self.value_type is float:
            if isinstance(raw, bool):
                raise ConfigError(f"Expected a number, got {raw}.", field=self.key)
            try:
                return float(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"Expected a number, got '{raw}'.", field=self.key) from None
        return str(raw).strip()

    def coerce(self, raw: Any) -> Any:
        """Converts a flag string or a JSON value to the field's type."""
        if raw is None:
            return None
        if self.multiple:
            if isinstance(raw, str):
                items = [item for item in raw.split(',') if item.strip()]
            elif isinstance(raw, (list, tuple)):
                items = list(raw)
            else:
                items = [raw]
            return [self._coerce_one(item) for item in items]
        if isinstance(raw, (list, dict)):
            raise ConfigError(f"Expected a single value, got {type(raw).__name__}.", field=self.key)
        return self._coerce_one(raw)

class FieldConfig(TypedDict):
    field: ConfigField
    validators: list[ValidatorFunc]

class CommandDefinition(TypedDict):
    name: str
    title: str
    description: str
    fields: list[FieldConfig]
    # Command-specific defaults, applied over the schema defaults.
    defaults: NotRequired[dict[str, Any]]

# ===================================================================
# 2. THE EXPERIMENT SCHEMA (Single Source of Truth)
# ===================================================================

ESTIMATOR_TAGS: list[str] = [e.value for e in EstimatorType]
CLOSED_FORM_FAMILIES: list[str] = [FamilyType.MEAN.value, FamilyType.COV.value, FamilyType.GMM.value]
ALL_FAMILIES: list[str] = [f.value for f in FamilyType]

class ExperimentSchema:
    """
    Every configuration key of every command. Flags, JSON config keys and
    dashboard inputs are all generated from these fields.
    """
    FAMILY = ConfigField(key='family', label='Problem family or registry profile', default_value='mean',
                         options=list(FAMILY_REGISTRY), ui_type='select')
    DIM = ConfigField(key='dim', label='Dimension d', value_type=int, default_value=2)
    BANDWIDTH = ConfigField(key='bandwidth', label='Kernel bandwidth sigma^2', value_type=float)
    BANDWIDTHS = ConfigField(key='bandwidths', label='Kernel bandwidths sigma^2', value_type=float,
                             default_value=[1.0, 10.0, 100.0], multiple=True, ui_type='text')
    EPSILON = ConfigField(key='epsilon', label='Noise floor eps', value_type=float, default_value=0.0)
    LR = ConfigField(key='lr', label='Learning rate', value_type=float)
    ITERS = ConfigField(key='iters', label='Iterations', value_type=int)
    METHOD = ConfigField(key='method', label='Optimizer', default_value='adam', options=['adam', 'gd'], ui_type='select')
    M = ConfigField(key='m', label='Data points m', value_type=int, default_value=1000)
    N = ConfigField(key='n', label='Fake points n (defaults to m)', value_type=int)
    ESTIMATORS = ConfigField(key='estimators', label='Estimators', default_value=ESTIMATOR_TAGS,
                             options=ESTIMATOR_TAGS, multiple=True, ui_type='multiselect')
    REPEATS = ConfigField(key='repeats', label='Repeats per axis value', value_type=int, default_value=100)
    SEED = ConfigField(key='seed', label='Master seed', value_type=int, default_value=0)
    AXIS = ConfigField(key='axis', label='Sweep axis', default_value='m', options=['m', 'epsilon'], ui_type='select')
    AXIS_VALUES = ConfigField(key='axis_values', label='Sweep axis values', value_type=float,
                              default_value=[50, 100, 200, 400, 800], multiple=True, ui_type='text')
    NOISE_VAR = ConfigField(key='noise_var', label='Unmixing noise variances', value_type=float,
                            default_value=[0.001], multiple=True, ui_type='text')
    METHODS = ConfigField(key='methods', label='Unmixing methods', default_value=['mmd', 'vca'],
                          options=['mmd', 'vca', 'random'], multiple=True, ui_type='multiselect')
    RANK = ConfigField(key='rank', label='Endmembers r', value_type=int, default_value=int(UNMIXING_DEFAULTS['rank']))
    TRIALS = ConfigField(key='trials', label='Trials', value_type=int, default_value=int(UNMIXING_DEFAULTS['trials']))
    EPOCHS = ConfigField(key='epochs', label='Epochs', value_type=int, default_value=int(UNMIXING_DEFAULTS['epochs']))
    FAKES = ConfigField(key='fakes', label='Fakes per epoch', value_type=int, default_value=int(UNMIXING_DEFAULTS['fakes']))
    STARTS = ConfigField(key='starts', label='Scan starts', value_type=int, default_value=200)
    RADIUS = ConfigField(key='radius', label='Domain radius', value_type=float, default_value=2.0)
    POINTS = ConfigField(key='points', label='Grid points', value_type=int, default_value=201)
    CHECKS = ConfigField(key='checks', label='Random check points', value_type=int, default_value=20)
    OUT = ConfigField(key='out', label='Output directory', default_value='results', ui_type='text')
    N_JOBS = ConfigField(key='n_jobs', label='Parallel workers', value_type=int, default_value=1)
    PDF = ConfigField(key='pdf', label='Also write report.pdf', value_type=bool, default_value=False, ui_type='checkbox')

    @classmethod
    def get_all_fields(cls) -> list[ConfigField]:
        return [
            field_instance for field_instance in cls.__dict__.values()
            if isinstance(field_instance, ConfigField)
        ]

    @classmethod
    def by_key(cls, key: str) -> ConfigField:
        for field_instance in cls.get_all_fields():
            if field_instance.key == key:
                return field_instance
        raise KeyError(f"Unknown configuration key '{key}'.")

# ===================================================================
# 3. CENTRALIZED CONSTANTS & ENVIRONMENT
# ===================================================================

ENV_OUT_DIR: str = 'MMDSCAPE_OUT_DIR'
ENV_N_JOBS: str = 'MMDSCAPE_N_JOBS'
ENV_LOG_LEVEL: str = 'MMDSCAPE_LOG_LEVEL'
ENV_PORT: str = 'MMDSCAPE_PORT'
LOG_FORMAT: str = '%(asctime)s - %(levelname)s - %(message)s'

def env_defaults() -> dict[str, Any]:
    """Values taken from the environment (and a loaded .env); they sit above the schema defaults."""
    values: dict[str, Any] = {}
    if os.environ.get(ENV_OUT_DIR):
        values[ExperimentSchema.OUT.key] = os.environ[ENV_OUT_DIR]
    if os.environ.get(ENV_N_JOBS):
        values[ExperimentSchema.N_JOBS.key] = ExperimentSchema.N_JOBS.coerce(os.environ[ENV_N_JOBS])
    return values

def log_level_name(verbose: bool = False) -> str:
    if verbose:
        return 'DEBUG'
    return os.environ.get(ENV_LOG_LEVEL, 'INFO').upper()
