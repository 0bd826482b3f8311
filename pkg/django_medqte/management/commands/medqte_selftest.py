import json
import sys

from ...services.selftest import SelftestService
from ..base import MedqteCommand


class Command(MedqteCommand):
    help = 'Run the fast numerical invariant checks of the estimator.'
    command_name = 'selftest'

    def add_arguments(self, parser):
        parser.add_argument('--json', action='store_true', help='Print the check results as JSON')

    def handle(self, *args, **options):
        with self.translated_errors():
            config = self.resolve_config({})
            with self.recorded(config) as run:
                results = SelftestService().process()
                failed = [result.name for result in results if not result.passed]
                if run is not None:
                    if failed:
                        run.fail('failed checks: %s' % ', '.join(failed))
                    else:
                        run.succeed()

        if options.get('json'):
            self.stdout.write(json.dumps({'passed': not failed, 'checks': [r.to_dict() for r in results]}, indent=2))
        else:
            for result in results:
                self.stdout.write('%s %s (%s)' % ('PASS' if result.passed else 'FAIL', result.name, result.detail))
            self.stdout.write('%d of %d checks passed.' % (len(results) - len(failed), len(results)))

        if failed:
            self.stderr.write('Failed checks: %s' % ', '.join(failed))
            sys.exit(1)
