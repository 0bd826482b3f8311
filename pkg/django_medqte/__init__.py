import os

from django.conf import settings

__version__ = '0.3.0'

defaults = {
    'MEDQTE_RANDOM_SEED': 42,  # every run is reproducible unless told otherwise
    'MEDQTE_FOLDS': 3,
    'MEDQTE_GRID_SIZE': 99,
    'MEDQTE_GRID_STRATEGY': 'empirical_quantiles',
    'MEDQTE_GRID_BOUNDS': None,
    'MEDQTE_TAU': '0.05:0.95:0.01',
    'MEDQTE_VARIANT': 'theta',
    'MEDQTE_LEARNER': 'post_lasso',
    'MEDQTE_TRIM': 0.01,
    'MEDQTE_PENALTY_LEVEL': None,
    'MEDQTE_BOOTSTRAP_REPS': 999,
    'MEDQTE_ALPHA': 0.05,
    'MEDQTE_MULTIPLIER': 'standard_normal',
    'MEDQTE_CI_METHOD': 'percentile',
    'MEDQTE_MEDIATOR_KIND': 'binary',
    'MEDQTE_OUTCOME_KIND': 'continuous',
    'MEDQTE_COVARIATE_EXPANSION': 'none',
    'MEDQTE_THREADS': 1,
    'MEDQTE_RECORD_RUNS': True,
    'MEDQTE_PRESETS': {
        'desk': {
            'reps': 100,
            'sizes': (2500, 5000, 10000),
            'aux_covariates': 50,
            'truth_size': 2000000,
        },
        'full': {
            'reps': 1000,
            'sizes': (2500, 5000, 10000),
            'aux_covariates': 250,
            'truth_size': 40000000,
        },
    },
}


def settings_with_fallback(key):
    return getattr(settings, key, defaults[key])


def thread_cap():
    """Worker count; the MEDQTE_THREADS environment variable wins over the setting."""
    env_value = os.environ.get('MEDQTE_THREADS')
    value = env_value if env_value else settings_with_fallback('MEDQTE_THREADS')
    try:
        return max(1, int(value))
    except (TypeError, ValueError):
        raise ConfigError('MEDQTE_THREADS must be an integer, got %r' % (value,))


class MedqteError(Exception):
    pass


class ConfigError(MedqteError):
    pass


class DataValidationError(MedqteError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = 'line %d: %s' % (line, message)
        super().__init__(message)


class EstimationError(MedqteError):
    pass


class GlmFitError(EstimationError):
    pass
