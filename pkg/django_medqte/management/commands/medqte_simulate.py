import logging

from django.core.management.base import CommandError

from ...nuisances import NuisanceSpec
from ...scores import VARIANTS
from ...services.output import ResultWriter
from ...simulation import run_study
from ..base import MedqteCommand

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.1
METRIC_LABELS = (('imse', 'IMSE'), ('iwmse', 'IWMSE'), ('iae', 'IAE'), ('effect_iae', 'Effect IAE'))


class Command(MedqteCommand):
    help = 'Run the Monte Carlo study on the built-in data generating process.'
    command_name = 'simulate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--preset', choices=('desk', 'full'), help='Study scale (default desk)')
        parser.add_argument('--reps', type=int, help='Replications per sample size')
        parser.add_argument('--sizes', type=str, help='Comma-separated sample sizes')
        parser.add_argument('--aux-covariates', dest='aux_covariates', type=int,
                            help='Number of auxiliary covariates J')
        parser.add_argument('--truth-size', dest='truth_size', type=int,
                            help='Monte Carlo draws for the true profiles')

    def handle(self, *args, **options):
        with self.translated_errors():
            config = self.resolve_config(options)
            with self.recorded(config) as run:
                report = run_study(
                    config.reps, config.sizes, variants=VARIANTS, seed=config.seed, J=config.aux_covariates,
                    truth_size=config.truth_size, folds=config.folds, grid_size=config.grid_size,
                    tau_grid=config.rank_grid(),
                    spec=NuisanceSpec.uniform(config.learner, trim=config.trim, penalty=config.penalty_level),
                    n_jobs=config.threads,
                )
                with ResultWriter(config.out, config.config_hash) as writer:
                    writer.csv('simulation.csv', report.metrics)
                    writer.csv('simulation_effects.csv', report.effects)
                    writer.json('summary.json', dict(report.summary(), preset=config.preset))

                if report.failure_rate > MAX_FAILURE_RATE:
                    message = '%d of %d replications failed' % (len(report.failures), report.attempted)
                    raise CommandError(message, returncode=3)
                if run is not None:
                    run.succeed(['replication %(replication)d at n=%(n)d: %(error)s' % f for f in report.failures])

        for metric, label in METRIC_LABELS:
            table = report.table(metric)
            for variant in VARIANTS:
                if table.empty or variant not in table.index.get_level_values('variant'):
                    continue
                self.stdout.write('%s x 1000, %s' % (label, variant))
                self.stdout.write(table.loc[variant].to_string(float_format=lambda v: '%.3f' % v))
                self.stdout.write('')
