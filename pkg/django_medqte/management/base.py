from contextlib import contextmanager
from dataclasses import fields

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from .. import ConfigError, DataValidationError, EstimationError, settings_with_fallback
from ..config import RunConfig
from ..models import EstimationRun

CONFIG_FIELDS = frozenset(f.name for f in fields(RunConfig)) - {'command', 'threads'}


class MedqteCommand(BaseCommand):
    """
    Shared plumbing for the medqte_* commands: common flags, configuration resolution, the run ledger and the
    mapping of library errors onto exit codes.
    """
    command_name = None

    def add_arguments(self, parser):
        parser.add_argument('--config', dest='config_path', type=str,
                            help='Flat JSON file with configuration keys (flags win over it)')
        parser.add_argument('--out', type=str, help='Output directory (default medqte-output)')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--folds', type=int, help='Number of cross-fitting folds')
        parser.add_argument('--grid-size', dest='grid_size', type=int, help='Number of outcome grid points')
        parser.add_argument('--grid-strategy', dest='grid_strategy', choices=('empirical_quantiles', 'linear_span'))
        parser.add_argument('--grid-bounds', dest='grid_bounds', type=str, metavar='LO,HI',
                            help='Restrict the outcome grid to [LO, HI]')
        parser.add_argument('--tau', type=str, help='Rank grid as start:stop:step')
        parser.add_argument('--learner', choices=('mle', 'lasso', 'post_lasso'))
        parser.add_argument('--trim', type=float, help='Propensity clamp level in [0, 0.1]')
        parser.add_argument('--penalty-level', dest='penalty_level', type=float,
                            help='Fixed lasso penalty level (default: closed-form plug-in)')
        parser.add_argument('--outcome-kind', dest='outcome_kind', choices=('continuous', 'discrete'))

    def resolve_config(self, options):
        flags = {key: value for key, value in options.items() if key in CONFIG_FIELDS}
        return RunConfig.resolve(self.command_name, flags, options.get('config_path'))

    @contextmanager
    def recorded(self, config):
        run = None
        if settings_with_fallback('MEDQTE_RECORD_RUNS'):
            try:
                run = EstimationRun.objects.start(self.command_name, config.config_hash, config.out)
            except DatabaseError as e:
                raise ConfigError('run ledger unavailable (%s); run manage.py migrate or set '
                                  'MEDQTE_RECORD_RUNS = False' % e)
        try:
            yield run
        except Exception as e:
            if run is not None:
                run.fail(e)
            raise

    @contextmanager
    def translated_errors(self):
        try:
            yield
        except (ConfigError, DataValidationError) as e:
            raise CommandError(str(e), returncode=2)
        except EstimationError as e:
            raise CommandError(str(e), returncode=3)
