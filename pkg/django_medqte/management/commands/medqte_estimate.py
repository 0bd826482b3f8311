import logging

from ...services.estimation import EstimationService
from ..base import MedqteCommand

logger = logging.getLogger(__name__)


class Command(MedqteCommand):
    help = 'Estimate natural direct and indirect quantile treatment effects from a CSV file.'
    command_name = 'estimate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--input', type=str, help='CSV with columns y, d, m, x1..xp')
        parser.add_argument('--variant', choices=('theta', 'theta_prime'))
        parser.add_argument('--mediator-kind', dest='mediator_kind', choices=('binary', 'continuous'))
        parser.add_argument('--bootstrap-reps', dest='bootstrap_reps', type=int,
                            help='Multiplier bootstrap replications (0 skips inference)')
        parser.add_argument('--alpha', type=float)
        parser.add_argument('--multiplier', choices=('standard_normal', 'rademacher'))
        parser.add_argument('--ci-method', dest='ci_method', choices=('percentile', 'normal'))
        parser.add_argument('--covariate-expansion', dest='covariate_expansion', choices=('none', 'quadratic'),
                            help='append pairwise interactions and squares to the covariates')

    def handle(self, *args, **options):
        with self.translated_errors():
            config = self.resolve_config(options)
            with self.recorded(config) as run:
                service = EstimationService(config)
                outcome = service.process()
                service.write(outcome)
                if run is not None:
                    run.succeed(outcome.warnings)

        self.stdout.write('Wrote cdf.csv, quantiles.csv, effects.csv and run.json to %s' % config.out)
        for message in outcome.warnings:
            self.stdout.write('warning: %s' % message)
