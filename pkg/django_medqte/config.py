"""
Run configuration for the management commands.

Each field resolves with precedence: command-line flag > `--config` JSON file > simulation preset >
Django setting > library default.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

from . import ConfigError, DataValidationError, settings_with_fallback, thread_cap
from .bootstrap import CI_METHODS, MULTIPLIERS
from .data import COVARIATE_EXPANSIONS, GRID_STRATEGIES, MEDIATOR_KINDS, CONTINUOUS as CONTINUOUS_MEDIATOR, RankGrid
from .glm import LEARNERS
from .nuisances import MAX_TRIM
from .quantiles import OUTCOME_KINDS
from .scores import THETA_PRIME, VARIANTS

logger = logging.getLogger(__name__)

ESTIMATE = 'estimate'
SIMULATE = 'simulate'
SELFTEST = 'selftest'
COMMANDS = (ESTIMATE, SIMULATE, SELFTEST)

# fields backed by a MEDQTE_* setting
SETTINGS = {
    'seed': 'MEDQTE_RANDOM_SEED',
    'folds': 'MEDQTE_FOLDS',
    'grid_size': 'MEDQTE_GRID_SIZE',
    'grid_strategy': 'MEDQTE_GRID_STRATEGY',
    'grid_bounds': 'MEDQTE_GRID_BOUNDS',
    'tau': 'MEDQTE_TAU',
    'variant': 'MEDQTE_VARIANT',
    'learner': 'MEDQTE_LEARNER',
    'trim': 'MEDQTE_TRIM',
    'penalty_level': 'MEDQTE_PENALTY_LEVEL',
    'bootstrap_reps': 'MEDQTE_BOOTSTRAP_REPS',
    'alpha': 'MEDQTE_ALPHA',
    'multiplier': 'MEDQTE_MULTIPLIER',
    'ci_method': 'MEDQTE_CI_METHOD',
    'mediator_kind': 'MEDQTE_MEDIATOR_KIND',
    'outcome_kind': 'MEDQTE_OUTCOME_KIND',
    'covariate_expansion': 'MEDQTE_COVARIATE_EXPANSION',
}
PRESET_FIELDS = ('reps', 'sizes', 'aux_covariates', 'truth_size')
DEFAULT_PRESET = 'desk'
UNHASHED = ('out', 'threads')


@dataclass(frozen=True)
class RunConfig:
    command: str = ESTIMATE
    input: Optional[str] = None
    out: str = 'medqte-output'
    seed: int = 42
    folds: int = 3
    grid_size: int = 99
    grid_strategy: str = 'empirical_quantiles'
    grid_bounds: Optional[Tuple[float, float]] = None
    tau: str = '0.05:0.95:0.01'
    variant: str = 'theta'
    learner: str = 'post_lasso'
    trim: float = 0.01
    penalty_level: Optional[float] = None
    bootstrap_reps: int = 999
    alpha: float = 0.05
    multiplier: str = 'standard_normal'
    ci_method: str = 'percentile'
    mediator_kind: str = 'binary'
    outcome_kind: str = 'continuous'
    covariate_expansion: str = 'none'
    preset: Optional[str] = None
    reps: int = 100
    sizes: Tuple[int, ...] = (2500, 5000, 10000)
    aux_covariates: int = 50
    truth_size: int = 2000000
    threads: int = 1

    @classmethod
    def resolve(cls, command, flags=None, config_path=None) -> 'RunConfig':
        if command not in COMMANDS:
            raise ConfigError('unknown command %r' % (command,))
        flags = {key: value for key, value in (flags or {}).items() if value is not None}
        from_file = load_config_file(config_path) if config_path else {}

        values = {'command': command}
        for name, key in SETTINGS.items():
            values[name] = settings_with_fallback(key)
        preset_name = flags.get('preset', from_file.get('preset'))
        if command == SIMULATE:
            preset_name = preset_name or DEFAULT_PRESET
            presets = settings_with_fallback('MEDQTE_PRESETS')
            if preset_name not in presets:
                raise ConfigError('unknown preset %r (choose from %s)' % (preset_name, ', '.join(sorted(presets))))
            values.update({key: presets[preset_name][key] for key in PRESET_FIELDS if key in presets[preset_name]})
            values['preset'] = preset_name
        values.update(from_file)
        values.update(flags)
        values['threads'] = thread_cap()

        config = cls(**_coerce(values))
        config.validate()
        logger.debug('Resolved %s configuration %s', command, config.config_hash)
        return config

    def validate(self):
        def check(condition, message):
            if not condition:
                raise ConfigError(message)

        check(self.folds >= 2, 'cross-fitting requires at least two folds')
        check(self.grid_size >= 2, 'grid size must be at least 2')
        check(self.grid_strategy in GRID_STRATEGIES, 'unknown grid strategy %r' % (self.grid_strategy,))
        check(self.variant in VARIANTS, 'variant must be one of %s' % ', '.join(VARIANTS))
        check(self.learner in LEARNERS, 'learner must be one of %s' % ', '.join(LEARNERS))
        check(0.0 <= self.trim <= MAX_TRIM, 'trim must lie in [0, %g]' % MAX_TRIM)
        check(self.penalty_level is None or self.penalty_level >= 0, 'penalty level must be nonnegative')
        check(self.bootstrap_reps == 0 or self.bootstrap_reps >= 2,
              'bootstrap replications must be 0 (skip) or at least 2')
        check(0.0 < self.alpha < 1.0, 'alpha must lie in (0, 1)')
        check(self.multiplier in MULTIPLIERS, 'multiplier must be one of %s' % ', '.join(MULTIPLIERS))
        check(self.ci_method in CI_METHODS, 'ci method must be one of %s' % ', '.join(CI_METHODS))
        check(self.mediator_kind in MEDIATOR_KINDS, 'mediator kind must be one of %s' % ', '.join(MEDIATOR_KINDS))
        check(self.outcome_kind in OUTCOME_KINDS, 'outcome kind must be one of %s' % ', '.join(OUTCOME_KINDS))
        check(self.covariate_expansion in COVARIATE_EXPANSIONS,
              'covariate expansion must be one of %s' % ', '.join(COVARIATE_EXPANSIONS))
        check(not (self.variant == THETA_PRIME and self.mediator_kind == CONTINUOUS_MEDIATOR),
              'variant theta_prime requires a binary mediator; use variant theta for a continuous mediator')
        check(self.grid_bounds is None or self.grid_bounds[0] < self.grid_bounds[1],
              'grid bounds must satisfy lower < upper')
        check(self.reps >= 1, 'reps must be at least 1')
        check(len(self.sizes) > 0 and min(self.sizes) >= 100, 'simulated sample sizes must be at least 100')
        check(self.aux_covariates >= 0, 'auxiliary covariate count must be nonnegative')
        check(self.truth_size >= 1000, 'truth size must be at least 1000')
        check(self.command != ESTIMATE or bool(self.input), '--input is required for estimate')
        try:
            self.rank_grid()
        except DataValidationError as e:
            raise ConfigError(str(e))

    def rank_grid(self) -> RankGrid:
        return RankGrid.from_spec(self.tau)

    def to_dict(self):
        payload = asdict(self)
        payload['grid_bounds'] = list(self.grid_bounds) if self.grid_bounds else None
        payload['sizes'] = list(self.sizes)
        return payload

    @property
    def config_hash(self):
        payload = {key: value for key, value in self.to_dict().items() if key not in UNHASHED}
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def load_config_file(path):
    """Read a flat JSON object whose keys are `RunConfig` field names."""
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except OSError as e:
        raise ConfigError('cannot read config file %s (%s)' % (path, e))
    except ValueError as e:
        raise ConfigError('config file %s is not valid JSON (%s)' % (path, e))
    if not isinstance(payload, dict):
        raise ConfigError('config file %s must hold a flat JSON object' % path)
    known = {f.name for f in fields(RunConfig)} - {'command', 'threads'}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError('unknown config keys: %s' % ', '.join(unknown))
    for key, value in payload.items():
        if isinstance(value, dict):
            raise ConfigError('config key %r must not be nested' % key)
    return payload


def _parse_pair(value):
    if isinstance(value, str):
        value = value.split(',')
    parts = [float(part) for part in value]
    if len(parts) != 2:
        raise ConfigError('grid bounds need exactly two values')
    return tuple(parts)


def _coerce(values):
    """Normalize types coming from flags, JSON and settings."""
    try:
        if values.get('grid_bounds') is not None:
            values['grid_bounds'] = _parse_pair(values['grid_bounds'])
        if isinstance(values.get('sizes'), str):
            values['sizes'] = tuple(int(part) for part in values['sizes'].split(','))
        elif values.get('sizes') is not None:
            values['sizes'] = tuple(int(part) for part in values['sizes'])
        for name in ('seed', 'folds', 'grid_size', 'bootstrap_reps', 'reps', 'aux_covariates', 'truth_size',
                     'threads'):
            if values.get(name) is not None:
                values[name] = int(values[name])
        for name in ('trim', 'alpha', 'penalty_level'):
            if values.get(name) is not None:
                values[name] = float(values[name])
        if values.get('tau') is not None:
            values['tau'] = str(values['tau'])
    except (TypeError, ValueError) as e:
        raise ConfigError('invalid configuration value (%s)' % e)
    return values
