# mmdscape/cli.py
# ===================================================================
# 1. IMPORTS
# ===================================================================
from __future__ import annotations
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from .closed_form import ClosedFormObjective, cov_orthogonal_saddle, gmm_saddle_check
from .command_definitions import COMMANDS_BY_NAME
from .family_registry import EstimatorType, FamilyType, get_profile
from .harness import (
    DATA_STREAM, TARGET_STREAM, RecoveryReport, SweepConfig, emit_outputs, landscape_profile,
    make_target, recovery_trial, resolve_settings, run_gradient_checks, success_sweep, unmixing_experiment,
)
from .kernel import KernelConfig
from .models import (
    LowRankCovModel, SymGmmModel, derive_rng, derive_seed, sample, save_sample_csv, whiten_gmm,
)
from .optimize import scan_stationary
from .utils import CommandDefinition, LOG_FORMAT, env_defaults, log_level_name
from .validation import ConfigError, MmdScapeError

logger = logging.getLogger(__name__)

# ===================================================================
# 2. CONFIGURATION LOADING
# ===================================================================

def execute_command_validators(command_def: CommandDefinition, config: dict[str, Any]) -> tuple[bool, dict[str, str]]:
    """Runs every field's validators; the first failing message per field is kept."""
    errors: dict[str, str] = {}
    is_valid = True
    for field_conf in command_def['fields']:
        key = field_conf['field'].key
        value = config.get(key)
        for validator_func in field_conf['validators']:
            ok, msg = validator_func(value, config)
            if not ok:
                is_valid = False
                if key not in errors:
                    errors[key] = msg
                break
    return is_valid, errors

def read_config_file(path: Path) -> dict[str, Any]:
    """A JSON object whose keys mirror the flag names (dashes or underscores)."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e.msg}", line=e.lineno) from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a JSON object.", line=1)
    return {key.replace('-', '_'): value for key, value in raw.items()}

def _default_config(command_def: CommandDefinition) -> dict[str, Any]:
    config = {conf['field'].key: conf['field'].default_value for conf in command_def['fields']}
    config.update(command_def.get('defaults', {}))
    return config

def build_config(
    command: str, file_values: dict[str, Any] | None = None, flag_values: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """
    Layers schema defaults < command defaults < environment < config file < flags,
    coerces every value to its field type and validates the result.
    """
    command_def = COMMANDS_BY_NAME.get(command)
    if command_def is None:
        raise ConfigError(f"Unknown command '{command}'.")
    fields = {conf['field'].key: conf['field'] for conf in command_def['fields']}
    config = _default_config(command_def)
    config.update({key: value for key, value in env_defaults().items() if key in fields})

    for layer in (file_values or {}, flag_values or {}):
        for key, raw in layer.items():
            if key not in fields:
                raise ConfigError(f"'{key}' is not an option of '{command}'.", field=key)
            config[key] = fields[key].coerce(raw)

    is_valid, errors = execute_command_validators(command_def, config)
    if not is_valid:
        key, message = next(iter(errors.items()))
        raise ConfigError(message, field=key)
    return config

# ===================================================================
# 3. ARGUMENT PARSER (generated from the schema)
# ===================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mmdscape', description="MMD landscapes and parameter recovery experiments.")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, command_def in COMMANDS_BY_NAME.items():
        sub = subparsers.add_parser(name, help=command_def['title'], description=command_def['description'])
        defaults = _default_config(command_def)
        for conf in command_def['fields']:
            field = conf['field']
            help_text = field.label
            if field.options:
                help_text += f" ({'|'.join(field.options)})"
            if defaults.get(field.key) is not None:
                help_text += f" [default: {defaults[field.key]}]"
            # SUPPRESS keeps unset flags out of the namespace so file values survive.
            if field.value_type is bool:
                sub.add_argument(field.flag, dest=field.key, action='store_const', const=True,
                                 default=argparse.SUPPRESS, help=help_text)
            else:
                sub.add_argument(field.flag, dest=field.key, default=argparse.SUPPRESS, help=help_text)
        sub.add_argument('--config', type=Path, default=None, help="JSON config file; flags override it")
        sub.add_argument('--verbose', action='store_true', help="Debug logging")
    return parser

# ===================================================================
# 4. COMMANDS
# ===================================================================

def _print_frame(frame: pd.DataFrame) -> None:
    with pd.option_context('display.max_rows', None, 'display.width', 160):
        print(frame.to_string(index=False) if len(frame) else "(no rows)")

def run_check_grad(config: dict[str, Any]) -> int:
    frame = run_gradient_checks(
        FamilyType(config['family']), config['dim'], KernelConfig(config['bandwidth']),
        config['epsilon'], config['checks'], config['seed'], m=config['m'],
    )
    summary = frame.groupby('check').agg(max_rel_error=('rel_error', 'max'), tolerance=('tolerance', 'first'),
                                         passed=('passed', 'all')).reset_index()
    _print_frame(summary)
    return 0 if bool(frame['passed'].all()) else 1

def run_landscape(config: dict[str, Any]) -> int:
    family = FamilyType(config['family'])
    cfg = KernelConfig(config['bandwidth'])
    model_star = make_target(family, config['dim'], config['epsilon'], derive_rng(config['seed'], TARGET_STREAM))
    objective = ClosedFormObjective(model_star, cfg)
    points = scan_stationary(objective, config['radius'], config['starts'], config['seed'])

    rows = []
    for cp in points:
        row: dict[str, Any] = {
            'location': np.array2string(cp.location, precision=6),
            'value': cp.value, 'grad_norm': cp.grad_norm,
            'min_eig': cp.min_eig, 'max_eig': cp.max_eig, 'label': cp.label.value,
        }
        if isinstance(model_star, SymGmmModel):
            _, transform = whiten_gmm(model_star)
            row['whitened'] = np.array2string(transform @ cp.location, precision=6)
            row['case_b'] = gmm_saddle_check(model_star, cp.location, cfg, tol=1e-6)
        if isinstance(model_star, LowRankCovModel):
            row['norm_sq'] = float(cp.location @ cp.location)
        rows.append(row)
    frame = pd.DataFrame(rows)
    _print_frame(frame)
    if isinstance(model_star, LowRankCovModel):
        saddle = cov_orthogonal_saddle(model_star, cfg)
        print(f"predicted saddle ring: exists={saddle.exists}, radius_sq={saddle.radius_sq}")

    out_dir = Path(config['out'])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'critical_points.csv'
    frame.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {path}")
    return 0

def run_recover(config: dict[str, Any]) -> int:
    profile = get_profile(config['family'])
    seed = config['seed']
    model_star = make_target(profile['family'], config['dim'], config['epsilon'], derive_rng(seed, TARGET_STREAM))
    n = config['n'] if config['n'] is not None else config['m']

    report = RecoveryReport()
    for tag in config['estimators']:
        estimator = EstimatorType(tag)
        opt, cfg = resolve_settings(profile, estimator, config['lr'], config['iters'], config['bandwidth'], config['method'])
        report.trials.append(
            recovery_trial(model_star, estimator, config['m'], n, opt, cfg, seed, threshold=profile['success_threshold'])
        )
    _print_frame(report.to_frame())
    out_dir = Path(config['out'])
    emit_outputs(report, out_dir, pdf=config['pdf'])
    # Same draw as the trials' data.
    save_sample_csv(sample(model_star, config['m'], derive_seed(seed, DATA_STREAM)), out_dir / 'sample.csv')
    return 0

def run_sweep(config: dict[str, Any]) -> int:
    profile = get_profile(config['family'])
    sweep_config = SweepConfig(
        profile=config['family'], dim=config['dim'], axis=config['axis'],
        axis_values=tuple(int(v) if config['axis'] == 'm' else v for v in config['axis_values']),
        estimators=tuple(EstimatorType(e) for e in config['estimators']),
        repeats=config['repeats'] if config['repeats'] is not None else profile['repeats'],
        seed=config['seed'], m=config['m'], n=config['n'], epsilon=config['epsilon'],
        bandwidth=config['bandwidth'], lr=config['lr'], iters=config['iters'], method=config['method'],
    )
    report = success_sweep(sweep_config, n_jobs=config['n_jobs'])
    _print_frame(report.to_frame())
    emit_outputs(report, Path(config['out']), pdf=config['pdf'])
    return 0

def run_unmix(config: dict[str, Any]) -> int:
    optional = {key: config[key] for key in ('lr', 'bandwidth') if config[key] is not None}
    report = unmixing_experiment(
        config['noise_var'], config['trials'], methods=config['methods'], seed=config['seed'],
        dim=config['dim'], rank=config['rank'], n=config['n'], fakes=config['fakes'],
        epochs=config['epochs'], n_jobs=config['n_jobs'], **optional,
    )
    _print_frame(report.to_frame())
    emit_outputs(report, Path(config['out']), pdf=config['pdf'])
    return 0

def run_profile(config: dict[str, Any]) -> int:
    family = FamilyType(config['family'])
    model_star = make_target(family, config['dim'], config['epsilon'], derive_rng(config['seed'], TARGET_STREAM))
    report = landscape_profile(model_star, config['bandwidths'], radius=config['radius'], points=config['points'])
    emit_outputs(report, Path(config['out']), pdf=config['pdf'])
    return 0

COMMAND_RUNNERS = {
    'check-grad': run_check_grad,
    'landscape': run_landscape,
    'recover': run_recover,
    'sweep': run_sweep,
    'unmix': run_unmix,
    'profile': run_profile,
}

def run_command(command: str, flag_values: dict[str, Any]) -> int:
    """Builds the layered config with `flag_values` on top and runs one command."""
    return COMMAND_RUNNERS[command](build_config(command, flag_values=flag_values))

# ===================================================================
# 5. ENTRY POINT
# ===================================================================

def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=log_level_name(args.verbose), format=LOG_FORMAT)

    flag_values = {
        key: value for key, value in vars(args).items() if key not in ('command', 'config', 'verbose')
    }
    try:
        file_values = read_config_file(args.config) if args.config is not None else {}
        config = build_config(args.command, file_values, flag_values)
        logger.info(f"Running {args.command} with {config}")
        return COMMAND_RUNNERS[args.command](config)
    except MmdScapeError as e:
        logger.error(str(e))
        return 2

if __name__ == '__main__':
    sys.exit(main())
