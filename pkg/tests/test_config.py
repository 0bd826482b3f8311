import json
import os
import tempfile

from django.test import SimpleTestCase, override_settings

from django_medqte import ConfigError
from django_medqte.config import RunConfig, load_config_file


class TestRunConfig(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def config_file(self, payload):
        path = os.path.join(self.tmp.name, 'medqte.json')
        with open(path, 'w') as handle:
            json.dump(payload, handle)
        return path

    def test_library_defaults(self):
        config = RunConfig.resolve('estimate', {'input': 'data.csv'})

        self.assertEqual(config.folds, 3)
        self.assertEqual(config.tau, '0.05:0.95:0.01')
        self.assertEqual(config.bootstrap_reps, 999)
        self.assertEqual(len(config.rank_grid()), 91)

    @override_settings(MEDQTE_FOLDS=5, MEDQTE_TRIM=0.05)
    def test_precedence(self):
        path = self.config_file({'folds': 4, 'alpha': 0.1})
        config = RunConfig.resolve('estimate', {'input': 'data.csv', 'alpha': 0.2, 'seed': None}, path)

        self.assertEqual(config.trim, 0.05)
        self.assertEqual(config.folds, 4)
        self.assertEqual(config.alpha, 0.2)
        self.assertEqual(config.seed, 42)

    def test_simulation_presets(self):
        desk = RunConfig.resolve('simulate')
        full = RunConfig.resolve('simulate', {'preset': 'full', 'reps': 3})

        self.assertEqual((desk.preset, desk.reps, desk.aux_covariates), ('desk', 100, 50))
        self.assertEqual(full.sizes, (2500, 5000, 10000))
        self.assertEqual(full.aux_covariates, 250)
        self.assertEqual(full.reps, 3)
        with self.assertRaises(ConfigError):
            RunConfig.resolve('simulate', {'preset': 'huge'})

    def test_theta_prime_needs_binary_mediator(self):
        with self.assertRaisesMessage(ConfigError, 'theta_prime requires a binary mediator'):
            RunConfig.resolve('estimate', {'input': 'x.csv', 'variant': 'theta_prime',
                                           'mediator_kind': 'continuous'})

    def test_validation(self):
        invalid = [
            {'folds': 1}, {'trim': 0.3}, {'bootstrap_reps': 1}, {'alpha': 1.0}, {'tau': '0.5:0.1:0.1'},
            {'learner': 'forest'}, {'grid_bounds': '2,1'}, {'sizes': '50'}, {'covariate_expansion': 'cubic'},
        ]
        for flags in invalid:
            with self.assertRaises(ConfigError, msg=str(flags)):
                RunConfig.resolve('estimate', dict(flags, input='data.csv'))

    def test_estimate_requires_input(self):
        with self.assertRaisesMessage(ConfigError, '--input is required'):
            RunConfig.resolve('estimate')

    def test_coercion(self):
        config = RunConfig.resolve('simulate', {'sizes': '300,600', 'grid_bounds': '-1,1', 'seed': '7'})

        self.assertEqual(config.sizes, (300, 600))
        self.assertEqual(config.grid_bounds, (-1.0, 1.0))
        self.assertEqual(config.seed, 7)

    def test_config_hash_ignores_output_location(self):
        first = RunConfig.resolve('estimate', {'input': 'data.csv', 'out': 'a'})
        second = RunConfig.resolve('estimate', {'input': 'data.csv', 'out': 'b'})
        third = RunConfig.resolve('estimate', {'input': 'data.csv', 'seed': 1})

        self.assertEqual(first.config_hash, second.config_hash)
        self.assertNotEqual(first.config_hash, third.config_hash)
        self.assertEqual(len(first.config_hash), 64)

    def test_thread_cap_from_environment(self):
        os.environ['MEDQTE_THREADS'] = '3'
        try:
            self.assertEqual(RunConfig.resolve('selftest').threads, 3)
        finally:
            del os.environ['MEDQTE_THREADS']

    def test_invalid_thread_cap_from_environment(self):
        os.environ['MEDQTE_THREADS'] = 'many'
        try:
            with self.assertRaisesMessage(ConfigError, 'MEDQTE_THREADS must be an integer'):
                RunConfig.resolve('selftest')
        finally:
            del os.environ['MEDQTE_THREADS']

    @override_settings(MEDQTE_COVARIATE_EXPANSION='quadratic')
    def test_covariate_expansion_setting(self):
        self.assertEqual(RunConfig.resolve('estimate', {'input': 'data.csv'}).covariate_expansion, 'quadratic')
        config = RunConfig.resolve('estimate', {'input': 'data.csv', 'covariate_expansion': 'none'})
        self.assertEqual(config.covariate_expansion, 'none')

    def test_unknown_command(self):
        with self.assertRaises(ConfigError):
            RunConfig.resolve('plot')


class TestLoadConfigFile(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        path = os.path.join(self.tmp.name, 'config.json')
        with open(path, 'w') as handle:
            handle.write(text)
        return path

    def test_unknown_keys(self):
        with self.assertRaisesMessage(ConfigError, 'unknown config keys: colour'):
            load_config_file(self.write('{"colour": "red"}'))

    def test_nested_values(self):
        with self.assertRaises(ConfigError):
            load_config_file(self.write('{"seed": {"value": 1}}'))

    def test_invalid_json(self):
        with self.assertRaises(ConfigError):
            load_config_file(self.write('{seed: 1'))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config_file(os.path.join(self.tmp.name, 'missing.json'))

    def test_threads_are_not_configurable(self):
        with self.assertRaises(ConfigError):
            load_config_file(self.write('{"threads": 8}'))
