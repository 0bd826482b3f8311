import numpy as np
from django.test import SimpleTestCase

from django_medqte.scores import PAIRS, psi_components, psi_prime_value, psi_value
from django_medqte.services.selftest import SelftestService
from django_medqte.toy import ToyModel, orthogonality_directions, perturbation_slope


def sign_flipped_psi(inputs, d, d_prime):
    residual, bridge, base = psi_components(inputs, d, d_prime)
    return -residual + bridge + base


class TestToyModel(SimpleTestCase):

    def setUp(self):
        self.model = ToyModel()
        self.nuisances = self.model.true_nuisances()

    def test_cell_weights_sum_to_one(self):
        np.testing.assert_allclose(self.model.cell_weights().sum(axis=0), 1.0)

    def test_scores_identify_enumerated_truth(self):
        truth = self.model.truth()
        for index, (d, d_prime) in enumerate(PAIRS):
            for score in (psi_value, psi_prime_value):
                np.testing.assert_allclose(self.model.population_mean(self.nuisances, d, d_prime, score),
                                           truth[index], atol=1e-12)
            np.testing.assert_allclose(self.model.plugin_mean(self.nuisances, d, d_prime), truth[index], atol=1e-12)

    def test_truth_is_monotone_in_the_grid(self):
        self.assertTrue(np.all(np.diff(self.model.truth(), axis=1) > 0))

    def test_treatment_mediator_follows_bayes_rule(self):
        q = self.nuisances.treatment_mediator
        self.assertTrue(np.all((q > 0) & (q < 1)))
        # P(D=1 | m=1, x) > P(D=1 | x) because treatment raises the mediator
        self.assertTrue(np.all(q[1] > self.model.propensity))


class TestOrthogonality(SimpleTestCase):

    def setUp(self):
        self.model = ToyModel()
        self.directions = orthogonality_directions(self.model)

    def test_score_bias_is_second_order(self):
        for name, direction in self.directions.items():
            slope = perturbation_slope(self.model, direction)
            self.assertAlmostEqual(slope, 2.0, delta=0.2, msg=name)

    def test_plugin_bias_is_first_order(self):
        slope = perturbation_slope(self.model, {'imputation': self.directions['imputation']['imputation']},
                                   score=lambda inputs, d, d_prime: inputs.g4[d, d_prime])

        self.assertAlmostEqual(slope, 1.0, delta=0.2)

    def test_sign_flipped_ratio_term_breaks_orthogonality(self):
        slope = perturbation_slope(self.model, self.directions['outcome'], score=sign_flipped_psi)

        self.assertLess(slope, 1.8)


class TestSelftestService(SimpleTestCase):

    def test_all_checks_pass(self):
        results = SelftestService().process()

        self.assertGreaterEqual(len(results), 6)
        failed = [(r.name, r.detail) for r in results if not r.passed]
        self.assertEqual(failed, [])

    def test_sign_flip_is_detected(self):
        results = {r.name: r for r in SelftestService(psi=sign_flipped_psi).process()}

        self.assertFalse(results['neyman_orthogonality'].passed)
        self.assertFalse(results['psi_prime_identity'].passed)
        self.assertTrue(results['rearrangement'].passed)

    def test_crashing_check_is_reported(self):
        def broken(inputs, d, d_prime):
            raise RuntimeError('boom')

        results = {r.name: r for r in SelftestService(psi=broken).process()}

        self.assertFalse(results['psi_prime_identity'].passed)
        self.assertIn('boom', results['psi_prime_identity'].detail)
